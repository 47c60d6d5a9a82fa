"""Closed-form cycle / DRAM / utilization model for every operating mode.

Repetition counts (filter groups) use ceilings throughout; with the benchmark
networks K is a multiple of U and the ceiling equals the floor.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from math import ceil
from typing import Iterable, Sequence

from .netmodel import ConvLayerConfig, NetworkModel
from .oracle import count_nonpad_macs


class UnsupportedLayerError(ValueError):
    pass


MB_DECIMAL = 1_000_000
MB_BINARY = 1 << 20


@dataclass(frozen=True)
class ArchConfig:
    u: int = 64
    n: int = 3
    last_cu_pes: int = 4
    sram_words: int = 224
    # 7 words/cycle = the 112-bit DRAM path the headline ResNet-50 numbers assume;
    # 4 is the narrow 64-bit variant.
    read_buses: int = 7
    word_bits: int = 16
    acc_bits: int = 24
    clock_hz: float = 200e6
    mb_base: int = MB_DECIMAL

    def __post_init__(self):
        for name in ("u", "n", "last_cu_pes", "sram_words", "read_buses", "word_bits", "acc_bits"):
            if getattr(self, name) < 1:
                raise ValueError(f"ArchConfig.{name} must be >= 1")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")

    @property
    def total_pes(self) -> int:
        return self.u * self.n + self.last_cu_pes

    @property
    def resident_overlap(self) -> bool:
        """Weight reload in the resident 1x1 mode hides behind the feature stream."""
        return self.read_buses >= 2 * self.n + 1


class Mode(str, enum.Enum):
    CONV3X3 = "Conv3x3"
    CONV1X1_STANDARD = "Conv1x1Standard"
    CONV1X1_RESIDENT = "Conv1x1Resident"
    ROW_DECOMPOSED = "RowDecomposed"


@dataclass(frozen=True)
class Partitioning:
    p: int
    rows_per_block: int = 0
    features_per_partition: int = 0
    q: int = 0

    def blocks(self, ol: int) -> list[tuple[int, int]]:
        """Half-open output-row ranges of each sub-out-fmap (row-wise modes)."""
        r = self.rows_per_block
        return [(lo, min(lo + r, ol)) for lo in range(0, ol, r)]


def groups(k: int, width: int) -> int:
    return ceil(k / width)


# ---------------------------------------------------------------- 3x3 mode

def partitions_3x3(ol: int, sram_words: int, fl: int = 3, ic: int = 1) -> Partitioning:
    if ol > sram_words:
        raise UnsupportedLayerError(f"output row of {ol} words does not fit a {sram_words}-word SRAM")
    rows = min(sram_words // ol, ol)
    return Partitioning(p=ceil(ol / rows), rows_per_block=rows, q=fl * ic)


def cycles_3x3(ol: int, z: int, ic: int, k: int, u: int) -> int:
    return (3 * ol * ol - 2 * z * ol) * ic * groups(k, u)


def dram_in_3x3(il: int, p: int, z: int, ic: int, k: int, u: int) -> int:
    return (il + 2 * p - 2 * z) * il * ic * groups(k, u)


def dram_w_3x3(ic: int, k: int, u: int, p: int) -> int:
    q = 3 * ic
    return 3 * u * q * groups(k, u) * p


def dram_out(ol: int, k: int) -> int:
    return ol * ol * k


def mac_count(ic: int, k: int, fl: int, ol: int, z: int) -> int:
    """Non-pad MACs of a stride-1 layer."""
    return ic * k * (fl * fl * ol * ol - 2 * z * (2 * fl * ol - 2 * z))


def puf(macs: int, total_pes: int, cycles: int) -> float:
    return macs / (total_pes * cycles)


def puf_closed_3x3(k: int, u: int) -> float:
    return k / ((u + 1) * groups(k, u))


def puf_closed_1x1(u: int) -> float:
    return u / (u + 1)


# ---------------------------------------------------------------- 1x1 modes

def cycles_1x1(u: int, ic: int, p: int, k: int) -> int:
    return (u + 1) * ic * p * groups(k, u)


def dram_w_1x1(u: int, ic: int, p: int, k: int) -> int:
    return u * ic * p * groups(k, u)


def dram_in_1x1(ol: int, ic: int, k: int, u: int) -> int:
    return ol * ol * ic * groups(k, u)


def cycles_1x1_resident(u: int, ic: int, k: int) -> int:
    return u * ic * groups(k, 3 * u)


def dram_w_resident(k: int, fl: int, ic: int) -> int:
    return k * fl * fl * ic


def dram_in_resident(il: int, ic: int, k: int, u: int) -> int:
    return il * il * ic * groups(k, 3 * u)


# ---------------------------------------------------------------- large filters

@dataclass(frozen=True)
class RowPiece:
    row: int       # filter row j
    col: int       # first filter column covered
    width: int     # real weights (<= 3); the rest of the 3-wide slot is zero

    @property
    def full(self) -> bool:
        return self.width == 3


def decompose_rows(fl: int) -> list[RowPiece]:
    if fl < 1:
        raise ValueError("filter length must be >= 1")
    return [RowPiece(j, c, min(3, fl - c)) for j in range(fl) for c in range(0, fl, 3)]


def row_pieces(fl: int) -> list[RowPiece]:
    """Row passes per channel in the row-wise dataflow (3 full rows for FL=3)."""
    if fl == 3:
        return [RowPiece(j, 0, 3) for j in range(3)]
    return decompose_rows(fl)


# ---------------------------------------------------------------- mode selection

def select_mode(layer: ConvLayerConfig, arch: ArchConfig) -> Mode:
    if layer.fl == 3:
        return Mode.CONV3X3
    if layer.fl == 1:
        if layer.ol ** 2 >= arch.total_pes:
            return Mode.CONV1X1_STANDARD
        return Mode.CONV1X1_RESIDENT
    if layer.fl > 3:
        return Mode.ROW_DECOMPOSED
    raise UnsupportedLayerError(f"{layer.name}: no dataflow for FL={layer.fl}")


# ---------------------------------------------------------------- row-pass accounting

def _rows_streamed(layer: ConvLayerConfig, lo: int, hi: int, j: int) -> int:
    # Input rows m*S + j - Z for output rows m in [lo, hi); pad rows are never streamed.
    s, z, il = layer.s, layer.z, layer.il
    return sum(1 for m in range(lo, hi) if 0 <= m * s + j - z < il)


def _taps(lo: int, hi: int, s: int, z: int, fl: int, limit: int) -> int:
    # Distinct in-range input indices touched by outputs [lo, hi).
    return len({m * s + j - z for m in range(lo, hi) for j in range(fl)} & set(range(limit)))


def _rows_fetched(layer: ConvLayerConfig, lo: int, hi: int) -> int:
    # A sub-in-fmap's rows are fetched once; the feedback paths reuse them across filter rows.
    return _taps(lo, hi, layer.s, layer.z, layer.fl, layer.il)


def _cols_fetched(layer: ConvLayerConfig) -> int:
    return _taps(0, layer.ol, layer.s, layer.z, layer.fl, layer.il)


def rowwise_counts(layer: ConvLayerConfig, arch: ArchConfig) -> dict:
    """Cycle and DRAM counts of the row-wise dataflow from pass accounting.

    Each (filter group, sub-out-fmap, channel, piece) is one pass; every
    non-pad input row it streams costs S*OL cycles, and its 3-wide weight slot
    is loaded once per pass on the spare buses.
    """
    ol = layer.ol
    part = partitions_3x3(ol, arch.sram_words, layer.fl, layer.ic)
    pieces = row_pieces(layer.fl)
    g = groups(layer.k, arch.u)
    per_channel = 0
    rows_in = 0
    for lo, hi in part.blocks(ol):
        per_channel += sum(_rows_streamed(layer, lo, hi, pc.row) for pc in pieces)
        rows_in += _rows_fetched(layer, lo, hi)
    cycles = per_channel * layer.s * ol * layer.ic * g
    weights_per_pass = sum(pc.width for pc in pieces)
    return {
        "cycles": cycles,
        "dram_in": rows_in * _cols_fetched(layer) * layer.ic * g,
        # only filters that exist are fetched (ragged last group)
        "dram_w": weights_per_pass * layer.k * layer.ic * part.p,
        "partitions": part,
    }


def closed_form_applies(layer: ConvLayerConfig) -> bool:
    """The printed 3x3 equations assume S=1 and 'same' padding (Z=1)."""
    return layer.fl == 3 and layer.s == 1 and layer.z == 1


# ---------------------------------------------------------------- per-layer cost

@dataclass(frozen=True)
class LayerCost:
    name: str
    mode: Mode
    cycles: int
    stall_cycles: int
    dram_in_reads: int
    dram_w_reads: int
    dram_out_writes: int
    macs: int
    puf_eq5: float
    puf_closed: float
    latency_s: float
    dram_bytes: float
    dram_mb: float
    partitions: int

    @property
    def dram_total(self) -> int:
        return self.dram_in_reads + self.dram_w_reads + self.dram_out_writes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


def layer_macs(layer: ConvLayerConfig) -> int:
    # closed form undercounts pad taps when Z > 1
    if layer.s == 1 and layer.z <= 1:
        return mac_count(layer.ic, layer.k, layer.fl, layer.ol, layer.z)
    return count_nonpad_macs(layer)


def resident_phase_cycles(arch: ArchConfig, positions: int, weights: int) -> tuple[int, int]:
    """(cycles, stalls) for one channel phase of the resident 1x1 mode."""
    reload = ceil(weights / (arch.read_buses - 1))
    if arch.resident_overlap:
        cycles = max(arch.u, positions, reload)
    else:
        # narrow bus: the feature stream and the next weight reload serialize
        cycles = positions + reload
    return cycles, cycles - positions


def _nonpad_positions(layer: ConvLayerConfig) -> int:
    # Output positions whose single (1x1) tap lands on a real input feature.
    per_axis = sum(1 for m in range(layer.ol) if 0 <= m * layer.s - layer.z < layer.il)
    return per_axis * per_axis


def layer_cost(layer: ConvLayerConfig, arch: ArchConfig = ArchConfig(), mode: Mode | None = None) -> LayerCost:
    mode = mode or select_mode(layer, arch)
    ol, ic, k, u = layer.ol, layer.ic, layer.k, arch.u
    stalls = 0
    if mode in (Mode.CONV3X3, Mode.ROW_DECOMPOSED):
        if mode is Mode.CONV3X3 and layer.fl != 3:
            raise UnsupportedLayerError(f"{layer.name}: 3x3 mode needs FL=3")
        if mode is Mode.ROW_DECOMPOSED and layer.fl <= 3:
            raise UnsupportedLayerError(f"{layer.name}: row decomposition needs FL>3")
        if closed_form_applies(layer):
            part = partitions_3x3(ol, arch.sram_words, 3, ic)
            cycles = cycles_3x3(ol, layer.z, ic, k, u)
            d_in = dram_in_3x3(layer.il, part.p, layer.z, ic, k, u)
            # only filters that exist are fetched; equals the 3*U*Q*ceil(K/U)*P form when U | K
            d_w = 3 * part.q * k * part.p
        else:
            counts = rowwise_counts(layer, arch)
            part, cycles, d_in, d_w = counts["partitions"], counts["cycles"], counts["dram_in"], counts["dram_w"]
        closed = puf_closed_3x3(k, u) if mode is Mode.CONV3X3 else None
    elif mode is Mode.CONV1X1_STANDARD:
        if layer.fl != 1:
            raise UnsupportedLayerError(f"{layer.name}: 1x1 mode needs FL=1")
        if arch.read_buses < arch.n + 1:
            raise UnsupportedLayerError(f"standard 1x1 mode needs >= {arch.n + 1} read buses")
        p = ceil(ol * ol / arch.total_pes)
        part = Partitioning(p=p, features_per_partition=min(arch.total_pes, ol * ol))
        cycles = cycles_1x1(u, ic, p, k)
        stalls = ic * p * groups(k, u)
        d_w = k * ic * p
        d_in = _nonpad_positions(layer) * ic * groups(k, u)
        if layer.z == 0:
            assert d_in == dram_in_1x1(ol, ic, k, u)
        closed = puf_closed_1x1(u)
    elif mode is Mode.CONV1X1_RESIDENT:
        if layer.fl != 1:
            raise UnsupportedLayerError(f"{layer.name}: 1x1 mode needs FL=1")
        positions = ol * ol
        p = ceil(positions / arch.sram_words)
        part = Partitioning(p=p, features_per_partition=min(positions, arch.sram_words))
        cycles = 0
        width = 3 * u
        for g in range(groups(k, width)):
            nw = min(width, k - g * width)
            for lo in range(0, positions, arch.sram_words):
                c, st = resident_phase_cycles(arch, min(arch.sram_words, positions - lo), nw)
                cycles += c * ic
                stalls += st * ic
        d_w = dram_w_resident(k, 1, ic) * p
        d_in = _nonpad_positions(layer) * ic * groups(k, width)
        closed = None
    else:  # pragma: no cover
        raise UnsupportedLayerError(mode)

    d_out = dram_out(ol, k)
    macs = layer_macs(layer)
    if closed is None:
        # no printed closed form: evaluate the utilization ratio on the mode's own cycle count
        closed = puf(macs, arch.total_pes,
                     cycles_1x1_resident(u, ic, k) if mode is Mode.CONV1X1_RESIDENT else cycles)
    total_words = d_in + d_w + d_out
    dram_bytes = total_words * arch.word_bits / 8
    return LayerCost(
        name=layer.name, mode=mode, cycles=cycles, stall_cycles=stalls,
        dram_in_reads=d_in, dram_w_reads=d_w, dram_out_writes=d_out, macs=macs,
        puf_eq5=puf(macs, arch.total_pes, cycles), puf_closed=closed,
        latency_s=cycles / arch.clock_hz, dram_bytes=dram_bytes,
        dram_mb=dram_bytes / arch.mb_base, partitions=part.p,
    )


@dataclass(frozen=True)
class NetworkCost:
    network: str
    arch: ArchConfig
    layers: tuple[LayerCost, ...]

    @property
    def cycles(self) -> int:
        return sum(l.cycles for l in self.layers)

    @property
    def latency_s(self) -> float:
        return self.cycles / self.arch.clock_hz

    @property
    def dram_words(self) -> int:
        return sum(l.dram_total for l in self.layers)

    @property
    def dram_bytes(self) -> float:
        return self.dram_words * self.arch.word_bits / 8

    @property
    def dram_mb(self) -> float:
        return self.dram_bytes / self.arch.mb_base

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)


def network_cost(net: NetworkModel | Sequence[ConvLayerConfig], arch: ArchConfig = ArchConfig()) -> NetworkCost:
    layers: Iterable[ConvLayerConfig] = net.layers if isinstance(net, NetworkModel) else net
    name = net.name if isinstance(net, NetworkModel) else "layers"
    return NetworkCost(name, arch, tuple(layer_cost(l, arch) for l in layers))
