"""Cycle-exact pass-level simulator and analytical cost model for a reconfigurable CNN convolution accelerator."""

__version__ = "0.1.0"
