"""Randomized oracle-equivalence checks shared by the CLI and the test suite."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .costmodel import ArchConfig, Mode, layer_cost, mac_count
from .netmodel import ConvLayerConfig, LayerShapeError
from .oracle import FilterBank, LayerBounds, conv_direct, random_layer_gen
from .simulator import simulate_1x1_resident, simulate_1x1_standard, simulate_layer

MODE_BOUNDS = {
    Mode.CONV3X3: {"fl": (3,)},
    Mode.CONV1X1_STANDARD: {"fl": (1,)},
    Mode.CONV1X1_RESIDENT: {"fl": (1,)},
    Mode.ROW_DECOMPOSED: {"fl": (5, 7)},
}


@dataclass
class SuiteResult:
    name: str
    trials: int = 0
    passed: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.trials > 0 and self.passed == self.trials

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.passed}/{self.trials}"

    def record(self, good: bool, what: str) -> None:
        self.trials += 1
        if good:
            self.passed += 1
        elif len(self.failures) < 10:
            self.failures.append(what)


def _counters_match(layer, arch, mode, ctr) -> bool:
    lc = layer_cost(layer, arch, mode)
    return (ctr.cycles, ctr.dram_in_reads, ctr.dram_w_reads, ctr.dram_out_writes) == (
        lc.cycles, lc.dram_in_reads, lc.dram_w_reads, lc.dram_out_writes)


def oracle_suite(mode: Mode, trials: int, seed: int, arch: ArchConfig = ArchConfig(),
                 bounds: LayerBounds | None = None) -> SuiteResult:
    """Random layers run in ``mode``; output must equal the oracle bit for bit."""
    base = bounds or LayerBounds(k=(1, 2 * arch.u), bias=True)
    b = LayerBounds(**{**base.__dict__, **MODE_BOUNDS[mode]})
    rng = np.random.default_rng([seed, list(Mode).index(mode)])
    res = SuiteResult(f"oracle[{mode.value}]")
    for t in range(trials):
        layer, x, f = random_layer_gen(rng, b, name=f"t{t}")
        ref = conv_direct(layer, x, f)
        out, ctr = simulate_layer(layer, arch, x, f, mode=mode)
        good = np.array_equal(out, ref.output) and _counters_match(layer, arch, mode, ctr)
        if layer.s == 1:
            good = good and ctr.active_mac_cycles == ref.non_pad_macs
        res.record(good, repr(layer))
    return res


def mode_equivalence_suite(trials: int, seed: int, arch: ArchConfig = ArchConfig()) -> SuiteResult:
    rng = np.random.default_rng([seed, 99])
    b = LayerBounds(k=(1, 2 * arch.u), fl=(1,), bias=True)
    res = SuiteResult("mode-equivalence[1x1 standard vs resident]")
    for t in range(trials):
        layer, x, f = random_layer_gen(rng, b, name=f"eq{t}")
        a, _ = simulate_1x1_standard(layer, arch, x, f)
        r, _ = simulate_1x1_resident(layer, arch, x, f)
        res.record(np.array_equal(a, r), repr(layer))
    return res


def mac_grid() -> list[ConvLayerConfig]:
    """Stride-1 shapes for checking the closed-form MAC count (>= 50 points)."""
    out = []
    # The closed form charges 2Z pad taps per axis, which is exact only for Z <= 1.
    for fl, ol, z, ic, k in itertools.product((1, 3, 5, 7), (2, 5, 8), (0, 1), (1, 3), (1, 2)):
        il = ol - 2 * z + fl - 1
        try:
            out.append(ConvLayerConfig(f"g{len(out)}", il=il, ic=ic, fl=fl, k=k, s=1, z=z))
        except LayerShapeError:
            continue
    return out


def mac_suite(seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("mac-count[closed form vs oracle]")
    for layer in mac_grid():
        x = rng.integers(-3, 4, size=(layer.ic, layer.il, layer.il))
        w = rng.integers(-3, 4, size=(layer.k, layer.ic, layer.fl, layer.fl))
        ref = conv_direct(layer, x, FilterBank(w))
        res.record(ref.non_pad_macs == mac_count(layer.ic, layer.k, layer.fl, layer.ol, layer.z), repr(layer))
    return res


def run_all(trials: int, seed: int, arch: ArchConfig = ArchConfig(), equivalence_trials: int | None = None):
    results = [oracle_suite(m, trials, seed, arch) for m in Mode]
    results.append(mode_equivalence_suite(equivalence_trials or max(100, trials // 5), seed, arch))
    results.append(mac_suite(seed))
    return results
