"""Pass-level simulator of the CU array.

Every operating mode is executed as the sequence of passes (3x3 / row modes)
or channel phases (1x1 modes) the hardware steps through. Counters are
accumulated by those loops; partial results live in a per-group SRAM image
and are bit-exact against direct convolution.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from math import ceil
from typing import Callable, Iterator

import numpy as np

from .costmodel import (ArchConfig, Mode, UnsupportedLayerError, partitions_3x3,
                        row_pieces, select_mode)
from .netmodel import ConvLayerConfig, NetworkModel
from .oracle import FilterBank, check_shapes, random_tensors, word_range

log = logging.getLogger(__name__)

# Words per cycle each narrow output SRAM drains towards DRAM.
DEFAULT_DRAIN_WORDS = 1


class AccumulatorOverflowError(ArithmeticError):
    pass


@dataclass
class SimCounters:
    cycles: int = 0
    stall_cycles: int = 0
    active_mac_cycles: int = 0
    dram_in_reads: int = 0
    dram_w_reads: int = 0
    dram_out_writes: int = 0
    # cycles a drain would have blocked compute; never added to ``cycles``
    drain_stall_cycles: int = 0
    partition_cycles: list[int] = field(default_factory=list)

    @property
    def dram_total(self) -> int:
        return self.dram_in_reads + self.dram_w_reads + self.dram_out_writes

    def __iadd__(self, other: "SimCounters") -> "SimCounters":
        for name in ("cycles", "stall_cycles", "active_mac_cycles", "dram_in_reads",
                     "dram_w_reads", "dram_out_writes", "drain_stall_cycles"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.partition_cycles.extend(other.partition_cycles)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("partition_cycles")
        return d


@dataclass(frozen=True)
class PassRecord:
    mode: str
    cu_lo: int
    cu_hi: int
    group: int
    partition: int
    channel: int
    piece: int
    cycles: int
    dram_in: int
    dram_w: int


TRACE_FIELDS = list(PassRecord.__dataclass_fields__)

Trace = Callable[[PassRecord], None]


class _Drain:
    """Paired-SRAM drain: partition p empties while partition p+1 computes.

    All narrow SRAMs drain in parallel, so the time is set by the fullest one.
    """

    def __init__(self, words_per_cycle: int):
        self.rate = words_per_cycle
        self.pending = 0

    def start(self, words: int) -> None:
        self.pending = ceil(words / self.rate)

    def overlap(self, compute_cycles: int) -> int:
        stall = max(0, self.pending - compute_cycles)
        self.pending = 0
        return stall


def _acc_dtype(x: np.ndarray, w: np.ndarray, taps: int):
    bound = int(np.abs(x).max(initial=0)) * int(np.abs(w).max(initial=0)) * taps
    return np.int64 if bound < (1 << 62) else object


def _check_acc(sram: np.ndarray, acc_bits: int | None, where: str) -> None:
    if acc_bits is None or sram.size == 0:
        return
    lo, hi = word_range(acc_bits)
    if sram.min() < lo or sram.max() > hi:
        raise AccumulatorOverflowError(f"{where}: partial result outside {acc_bits}-bit accumulator range")


# ---------------------------------------------------------------- row-wise modes

def _simulate_rowwise(layer, arch, x, filters, mode, *, functional, acc_bits, trace, drain_words):
    ol, s, z, il, fl, ic, k, u = layer.ol, layer.s, layer.z, layer.il, layer.fl, layer.ic, layer.k, arch.u
    part = partitions_3x3(ol, arch.sram_words, fl, ic)
    pieces = row_pieces(fl)
    n = np.arange(ol)
    # per piece: padded column indices (OL, width) and the set of real input columns touched
    piece_cols = []
    for pc in pieces:
        idx = n[:, None] * s + pc.col + np.arange(pc.width)[None, :]
        real = idx - z
        valid_cols = int(((real >= 0) & (real < il)).sum())
        piece_cols.append((idx, valid_cols, set(real[(real >= 0) & (real < il)].tolist())))

    ctr = SimCounters()
    out = None
    if functional:
        dtype = _acc_dtype(x, filters.weights, fl * fl * ic)
        xp = np.zeros((ic, il + 2 * z, il + 2 * z), dtype=dtype)
        xp[:, z:z + il, z:z + il] = x
        w = filters.weights.astype(dtype)
        out = np.zeros((k, ol, ol), dtype=dtype)
    drain = _Drain(drain_words)

    for g in range(ceil(k / u)):
        f0, f1 = g * u, min(k, (g + 1) * u)
        nf = f1 - f0
        for pi, (lo, hi) in enumerate(part.blocks(ol)):
            if (hi - lo) * ol > arch.sram_words:
                raise UnsupportedLayerError("sub-out-fmap exceeds SRAM")
            sram = np.zeros((nf, hi - lo, ol), dtype=out.dtype) if functional else None
            p_cycles = 0
            for c in range(ic):
                streamed_cols: dict[int, set] = {}
                for qi, pc in enumerate(pieces):
                    ms = [m for m in range(lo, hi) if 0 <= m * s + pc.row - z < il]
                    rows = [m * s + pc.row - z for m in ms]
                    cols_idx, valid_cols, col_set = piece_cols[qi]
                    new_in = 0
                    for r in rows:
                        seen = streamed_cols.setdefault(r, set())
                        new_in += len(col_set - seen)
                        seen |= col_set
                    cyc = len(rows) * s * ol
                    dw = pc.width * nf
                    p_cycles += cyc
                    ctr.dram_w_reads += dw
                    ctr.dram_in_reads += new_in
                    ctr.active_mac_cycles += len(rows) * valid_cols * nf
                    if functional and rows:
                        seg = xp[c][np.asarray(rows) + z][:, cols_idx]        # (R, OL, width)
                        wrow = w[f0:f1, c, pc.row, pc.col:pc.col + pc.width]  # (nf, width)
                        sram[:, np.asarray(ms) - lo, :] += np.tensordot(wrow, seg, axes=([1], [2]))
                        _check_acc(sram, acc_bits, layer.name)
                    if trace is not None:
                        trace(PassRecord(mode.value, f0 - g * u, f1 - g * u, g, pi, c, qi, cyc, new_in, dw))
            ctr.cycles += p_cycles
            ctr.partition_cycles.append(p_cycles)
            ctr.drain_stall_cycles += drain.overlap(p_cycles)
            words = (hi - lo) * ol
            ctr.dram_out_writes += nf * words
            drain.start(words)
            if functional:
                out[f0:f1, lo:hi, :] = sram
    return out, ctr


# ---------------------------------------------------------------- 1x1 modes

def _gather_positions(layer: ConvLayerConfig, x: np.ndarray | None):
    """Per-channel feature vector for every output position (zeros on pad)."""
    ol, s, z, il = layer.ol, layer.s, layer.z, layer.il
    src = np.arange(ol) * s - z
    ok = (src >= 0) & (src < il)
    valid = np.outer(ok, ok).ravel()
    if x is None:
        return None, valid
    feats = np.zeros((layer.ic, ol, ol), dtype=x.dtype)
    feats[:, np.ix_(ok, ok)[0], np.ix_(ok, ok)[1]] = x[:, src[ok]][:, :, src[ok]]
    return feats.reshape(layer.ic, ol * ol), valid


def _simulate_1x1_standard(layer, arch, x, filters, *, functional, acc_bits, trace, drain_words):
    if arch.read_buses < arch.n + 1:
        raise UnsupportedLayerError(f"standard 1x1 mode needs >= {arch.n + 1} read buses, have {arch.read_buses}")
    if arch.u > arch.sram_words:
        raise UnsupportedLayerError("a PE's SRAM must hold one partial result per filter of a group")
    ol, ic, k, u = layer.ol, layer.ic, layer.k, arch.u
    npos = ol * ol
    block = arch.total_pes
    dtype = _acc_dtype(x, filters.weights, ic) if functional else np.int64
    feats, valid = _gather_positions(layer, x.astype(dtype) if functional else None)
    w = filters.weights[:, :, 0, 0].astype(dtype) if functional else None
    out = np.zeros((k, npos), dtype=dtype) if functional else None
    ctr = SimCounters()
    drain = _Drain(drain_words)
    for g in range(ceil(k / u)):
        f0, f1 = g * u, min(k, (g + 1) * u)
        nf = f1 - f0
        for pi, lo in enumerate(range(0, npos, block)):
            hi = min(npos, lo + block)
            nvalid = int(valid[lo:hi].sum())
            acc = np.zeros((nf, hi - lo), dtype=dtype) if functional else None
            p_cycles = 0
            for c in range(ic):
                # U cycles of weights through the pipeline, then one cycle where all
                # read buses load the last CU's features and the pipeline stalls
                phase = u + 1
                p_cycles += phase
                ctr.stall_cycles += 1
                ctr.dram_w_reads += nf
                ctr.dram_in_reads += nvalid
                ctr.active_mac_cycles += nf * nvalid
                if functional:
                    acc += np.outer(w[f0:f1, c], feats[c, lo:hi])
                    _check_acc(acc, acc_bits, layer.name)
                if trace is not None:
                    trace(PassRecord(Mode.CONV1X1_STANDARD.value, 0, u + 1, g, pi, c, 0, phase, nvalid, nf))
            ctr.cycles += p_cycles
            ctr.partition_cycles.append(p_cycles)
            ctr.drain_stall_cycles += drain.overlap(p_cycles)
            ctr.dram_out_writes += nf * (hi - lo)
            drain.start(nf)
            if functional:
                out[f0:f1, lo:hi] = acc
    return (out.reshape(k, ol, ol) if functional else None), ctr


def _simulate_1x1_resident(layer, arch, x, filters, *, functional, acc_bits, trace, drain_words):
    ol, ic, k, u = layer.ol, layer.ic, layer.k, arch.u
    npos = ol * ol
    width = 3 * u          # one filter per PE of the regular CUs
    spare = arch.read_buses - 1
    overlapped = arch.read_buses >= 2 * arch.n + 1
    dtype = _acc_dtype(x, filters.weights, ic) if functional else np.int64
    feats, valid = _gather_positions(layer, x.astype(dtype) if functional else None)
    w = filters.weights[:, :, 0, 0].astype(dtype) if functional else None
    out = np.zeros((k, npos), dtype=dtype) if functional else None
    ctr = SimCounters()
    drain = _Drain(drain_words)
    for g in range(ceil(k / width)):
        f0, f1 = g * width, min(k, (g + 1) * width)
        nw = f1 - f0
        for pi, lo in enumerate(range(0, npos, arch.sram_words)):
            hi = min(npos, lo + arch.sram_words)
            stream = hi - lo
            nvalid = int(valid[lo:hi].sum())
            acc = np.zeros((nw, stream), dtype=dtype) if functional else None
            p_cycles = 0
            for c in range(ic):
                reload = ceil(nw / spare)
                if overlapped:
                    # features ride Input #0 while the spare buses refill the registers;
                    # a phase still spans the U-stage pipeline
                    phase = max(stream, reload, u)
                else:
                    phase = stream + reload
                p_cycles += phase
                ctr.stall_cycles += phase - stream
                ctr.dram_w_reads += nw
                ctr.dram_in_reads += nvalid
                ctr.active_mac_cycles += nw * nvalid
                if functional:
                    acc += np.outer(w[f0:f1, c], feats[c, lo:hi])
                    _check_acc(acc, acc_bits, layer.name)
                if trace is not None:
                    trace(PassRecord(Mode.CONV1X1_RESIDENT.value, 0, ceil(nw / 3), g, pi, c, 0, phase, nvalid, nw))
            ctr.cycles += p_cycles
            ctr.partition_cycles.append(p_cycles)
            ctr.drain_stall_cycles += drain.overlap(p_cycles)
            ctr.dram_out_writes += nw * stream
            drain.start(stream)
            if functional:
                out[f0:f1, lo:hi] = acc
    return (out.reshape(k, ol, ol) if functional else None), ctr


# ---------------------------------------------------------------- public entry points

def _prepare(layer, x, filters, functional):
    if not functional:
        return None, None
    x = np.asarray(x, dtype=np.int64)
    check_shapes(layer, x, filters)
    return x, filters


def _finish(out, filters):
    if out is not None and filters.bias is not None:
        out = out + filters.bias.astype(out.dtype)[:, None, None]
    return out


def simulate_3x3(layer, arch=ArchConfig(), x=None, filters=None, *, functional=True,
                 acc_bits=None, trace=None, drain_words=DEFAULT_DRAIN_WORDS):
    if layer.fl != 3:
        raise UnsupportedLayerError(f"{layer.name}: 3x3 mode needs FL=3")
    x, filters = _prepare(layer, x, filters, functional)
    out, ctr = _simulate_rowwise(layer, arch, x, filters, Mode.CONV3X3, functional=functional,
                                 acc_bits=acc_bits, trace=trace, drain_words=drain_words)
    return _finish(out, filters), ctr


def simulate_row_decomposed(layer, arch=ArchConfig(), x=None, filters=None, *, functional=True,
                            acc_bits=None, trace=None, drain_words=DEFAULT_DRAIN_WORDS):
    if layer.fl <= 3:
        raise UnsupportedLayerError(f"{layer.name}: row decomposition needs FL>3")
    x, filters = _prepare(layer, x, filters, functional)
    out, ctr = _simulate_rowwise(layer, arch, x, filters, Mode.ROW_DECOMPOSED, functional=functional,
                                 acc_bits=acc_bits, trace=trace, drain_words=drain_words)
    return _finish(out, filters), ctr


def simulate_1x1_standard(layer, arch=ArchConfig(), x=None, filters=None, *, functional=True,
                          acc_bits=None, trace=None, drain_words=DEFAULT_DRAIN_WORDS):
    if layer.fl != 1:
        raise UnsupportedLayerError(f"{layer.name}: 1x1 mode needs FL=1")
    x, filters = _prepare(layer, x, filters, functional)
    out, ctr = _simulate_1x1_standard(layer, arch, x, filters, functional=functional,
                                      acc_bits=acc_bits, trace=trace, drain_words=drain_words)
    return _finish(out, filters), ctr


def simulate_1x1_resident(layer, arch=ArchConfig(), x=None, filters=None, *, functional=True,
                          acc_bits=None, trace=None, drain_words=DEFAULT_DRAIN_WORDS):
    if layer.fl != 1:
        raise UnsupportedLayerError(f"{layer.name}: 1x1 mode needs FL=1")
    x, filters = _prepare(layer, x, filters, functional)
    out, ctr = _simulate_1x1_resident(layer, arch, x, filters, functional=functional,
                                      acc_bits=acc_bits, trace=trace, drain_words=drain_words)
    return _finish(out, filters), ctr


_DISPATCH = {
    Mode.CONV3X3: simulate_3x3,
    Mode.CONV1X1_STANDARD: simulate_1x1_standard,
    Mode.CONV1X1_RESIDENT: simulate_1x1_resident,
    Mode.ROW_DECOMPOSED: simulate_row_decomposed,
}


def simulate_layer(layer, arch=ArchConfig(), x=None, filters=None, *, mode=None, **kw):
    mode = mode or select_mode(layer, arch)
    return _DISPATCH[mode](layer, arch, x, filters, **kw)


@dataclass
class LayerSim:
    layer: ConvLayerConfig
    mode: Mode
    counters: SimCounters


@dataclass
class NetworkSim:
    network: str
    arch: ArchConfig
    seed: int
    layers: list[LayerSim]

    @property
    def totals(self) -> SimCounters:
        t = SimCounters()
        for l in self.layers:
            t += l.counters
        return t

    @property
    def latency_s(self) -> float:
        return self.totals.cycles / self.arch.clock_hz


def iter_network(net: NetworkModel, arch: ArchConfig = ArchConfig(), seed: int = 0, *,
                 functional: bool = True, chain: bool = False, trace: Trace | None = None,
                 **kw) -> Iterator[tuple[LayerSim, np.ndarray | None]]:
    """Simulate layer by layer with fresh random word-range tensors.

    With ``chain`` the previous output feeds the next layer whenever the
    shapes line up, clipped back into the word range.
    """
    rng = np.random.default_rng(seed)
    prev = None
    lo, hi = word_range(arch.word_bits)
    for layer in net.layers:
        x = filters = None
        if functional:
            x, filters = random_tensors(layer, rng, arch.word_bits)
            if chain and prev is not None and prev.shape == x.shape:
                x = np.clip(prev, lo, hi).astype(np.int64)
        mode = select_mode(layer, arch)
        out, ctr = simulate_layer(layer, arch, x, filters, mode=mode, functional=functional, trace=trace, **kw)
        log.debug("%s %s cycles=%d", layer.name, mode.value, ctr.cycles)
        prev = out
        yield LayerSim(layer, mode, ctr), out


def simulate_network(net: NetworkModel, arch: ArchConfig = ArchConfig(), seed: int = 0, **kw) -> NetworkSim:
    return NetworkSim(net.name, arch, seed, [ls for ls, _ in iter_network(net, arch, seed, **kw)])
