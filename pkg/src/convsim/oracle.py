"""Reference direct convolution and random test-layer generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .netmodel import ConvLayerConfig

# Tensor3 is an integer ndarray of shape (channels, length, length).
Tensor3 = np.ndarray


def word_range(word_bits: int) -> tuple[int, int]:
    return -(1 << (word_bits - 1)), (1 << (word_bits - 1)) - 1


def check_word_range(a: np.ndarray, word_bits: int, what: str = "tensor") -> None:
    lo, hi = word_range(word_bits)
    if a.size and (a.min() < lo or a.max() > hi):
        raise ValueError(f"{what} values outside the {word_bits}-bit range [{lo}, {hi}]")


@dataclass
class FilterBank:
    weights: np.ndarray  # (K, IC, FL, FL)
    bias: np.ndarray | None = None  # (K,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.int64)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ValueError(f"filter bank must be (K, IC, FL, FL), got {self.weights.shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.int64)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError("bias must have one entry per filter")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self):
        return self.weights.shape


@dataclass
class OracleResult:
    output: Tensor3
    total_macs_including_pads: int
    non_pad_macs: int


def check_shapes(layer: ConvLayerConfig, x: np.ndarray, filters: FilterBank) -> None:
    if x.shape != (layer.ic, layer.il, layer.il):
        raise ValueError(f"{layer.name}: input shape {x.shape} != {(layer.ic, layer.il, layer.il)}")
    if filters.shape != (layer.k, layer.ic, layer.fl, layer.fl):
        raise ValueError(f"{layer.name}: filter shape {filters.shape} != "
                         f"{(layer.k, layer.ic, layer.fl, layer.fl)}")


def conv_direct(layer: ConvLayerConfig, x: np.ndarray, filters: FilterBank) -> OracleResult:
    """y_k(m,n) = b_k + sum_c sum_j sum_i x_c(mS+j-Z, nS+i-Z) * w_c^k(j,i).

    Out-of-range input positions read as zero and are counted as pad MACs.
    """
    x = np.asarray(x, dtype=np.int64)
    check_shapes(layer, x, filters)
    ol, s, z, fl = layer.ol, layer.s, layer.z, layer.fl
    # int64 is exact while |x*w| * taps fits; otherwise fall back to Python ints
    bound = int(np.abs(x).max(initial=0)) * int(np.abs(filters.weights).max(initial=0)) * fl * fl * layer.ic
    dtype = np.int64 if bound < (1 << 62) else object
    xp = np.zeros((layer.ic, layer.il + 2 * z + s * fl, layer.il + 2 * z + s * fl), dtype=dtype)
    xp[:, z:z + layer.il, z:z + layer.il] = x
    inside = np.zeros(xp.shape[1:], dtype=np.int64)
    inside[z:z + layer.il, z:z + layer.il] = 1
    w = filters.weights.astype(dtype)

    y = np.zeros((layer.k, ol, ol), dtype=dtype)
    non_pad = 0
    span = s * (ol - 1) + 1
    for j in range(fl):
        for i in range(fl):
            win = xp[:, j:j + span:s, i:i + span:s]          # (IC, OL, OL)
            y += np.tensordot(w[:, :, j, i], win, axes=([1], [0]))
            non_pad += int(inside[j:j + span:s, i:i + span:s].sum())
    if filters.bias is not None:
        y += filters.bias.astype(dtype)[:, None, None]
    total = layer.k * ol * ol * fl * fl * layer.ic
    return OracleResult(y, total, non_pad * layer.k * layer.ic)


def count_nonpad_macs(layer: ConvLayerConfig) -> int:
    """Analytic non-pad MAC count for any stride (separable over rows and columns)."""
    per_axis = sum(1 for m in range(layer.ol) for j in range(layer.fl)
                   if 0 <= m * layer.s + j - layer.z < layer.il)
    return layer.k * layer.ic * per_axis * per_axis


# ---------------------------------------------------------------- random layers

@dataclass(frozen=True)
class LayerBounds:
    il: tuple[int, int] = (3, 20)
    ic: tuple[int, int] = (1, 8)
    k: tuple[int, int] = (1, 128)
    fl: Sequence[int] = (1, 3, 5, 7)
    s: Sequence[int] = (1, 2)
    z: Sequence[int] = (0, 1, 3)
    word_bits: int = 16
    bias: bool = False


def random_layer_gen(seed: int | np.random.Generator, bounds: LayerBounds = LayerBounds(),
                     name: str = "rand") -> tuple[ConvLayerConfig, np.ndarray, FilterBank]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    while True:
        il = int(rng.integers(bounds.il[0], bounds.il[1] + 1))
        fl = int(rng.choice(bounds.fl))
        s = int(rng.choice(bounds.s))
        z = int(rng.choice(bounds.z))
        if fl > il + 2 * z or (il - fl + 2 * z) // s + 1 < 1:
            continue
        break
    ic = int(rng.integers(bounds.ic[0], bounds.ic[1] + 1))
    k = int(rng.integers(bounds.k[0], bounds.k[1] + 1))
    layer = ConvLayerConfig(name, il=il, ic=ic, fl=fl, k=k, s=s, z=z)
    lo, hi = word_range(bounds.word_bits)
    x = rng.integers(lo, hi + 1, size=(ic, il, il), dtype=np.int64)
    w = rng.integers(lo, hi + 1, size=(k, ic, fl, fl), dtype=np.int64)
    b = rng.integers(lo, hi + 1, size=k, dtype=np.int64) if bounds.bias else None
    return layer, x, FilterBank(w, b)


def random_tensors(layer: ConvLayerConfig, rng: np.random.Generator, word_bits: int = 16):
    lo, hi = word_range(word_bits)
    x = rng.integers(lo, hi + 1, size=(layer.ic, layer.il, layer.il), dtype=np.int64)
    w = rng.integers(lo, hi + 1, size=(layer.k, layer.ic, layer.fl, layer.fl), dtype=np.int64)
    return x, FilterBank(w)


# ---------------------------------------------------------------- tensor files

def save_tensor(path: str | Path, a: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps({"shape": list(a.shape), "data": np.asarray(a).ravel().tolist()}))
    else:
        np.save(path, np.asarray(a, dtype=np.int64))


def load_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return np.asarray(doc["data"], dtype=np.int64).reshape(doc["shape"])
    return np.load(path).astype(np.int64)
