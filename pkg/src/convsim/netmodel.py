"""Convolution layer / network descriptors, benchmark builders and channel pruning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence


class LayerShapeError(ValueError):
    pass


def output_length(il: int, fl: int, z: int, s: int) -> int:
    ol = (il - fl + 2 * z) // s + 1
    if ol < 1:
        raise LayerShapeError(f"output length {ol} < 1 for IL={il} FL={fl} Z={z} S={s}")
    return ol


@dataclass(frozen=True)
class ConvLayerConfig:
    name: str
    il: int
    ic: int
    fl: int
    k: int
    s: int = 1
    z: int = 0
    # Projection shortcuts are kept apart from the main 49-layer chain.
    shortcut: bool = False

    def __post_init__(self):
        for attr in ("il", "ic", "fl", "k", "s"):
            if getattr(self, attr) < 1:
                raise LayerShapeError(f"{self.name}: {attr}={getattr(self, attr)} must be >= 1")
        if self.z < 0:
            raise LayerShapeError(f"{self.name}: z={self.z} must be >= 0")
        if self.fl > self.il + 2 * self.z:
            raise LayerShapeError(f"{self.name}: filter {self.fl} does not fit padded input {self.il}+2*{self.z}")
        output_length(self.il, self.fl, self.z, self.s)

    @property
    def ol(self) -> int:
        return output_length(self.il, self.fl, self.z, self.s)

    @property
    def oc(self) -> int:
        return self.k

    def to_dict(self) -> dict:
        return {"name": self.name, "il": self.il, "ic": self.ic, "fl": self.fl,
                "k": self.k, "s": self.s, "z": self.z}


@dataclass(frozen=True)
class NetworkModel:
    name: str
    layers: tuple[ConvLayerConfig, ...]
    # Producer index for each layer's input (None = network input / unmodelled op).
    producers: tuple[int | None, ...] = field(default=())
    # Layers whose K is fixed by a residual sum; pruning them would break the add.
    locked: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "locked", frozenset(self.locked))
        if not self.producers:
            object.__setattr__(self, "producers", _chain_producers(self.layers))
        object.__setattr__(self, "producers", tuple(self.producers))
        if len(self.producers) != len(self.layers):
            raise LayerShapeError("producers must have one entry per layer")
        for i, p in enumerate(self.producers):
            if p is None:
                continue
            if not 0 <= p < len(self.layers) or p == i:
                raise LayerShapeError(f"layer {i}: bad producer index {p}")
            if self.layers[i].ic != self.layers[p].k:
                raise LayerShapeError(
                    f"{self.layers[i].name}: IC={self.layers[i].ic} but producer "
                    f"{self.layers[p].name} has K={self.layers[p].k}")

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def to_dict(self) -> dict:
        return {"name": self.name, "layers": [l.to_dict() for l in self.layers]}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "NetworkModel":
        try:
            layers = [
                ConvLayerConfig(name=str(d["name"]), il=int(d["il"]), ic=int(d["ic"]),
                                fl=int(d["fl"]), k=int(d["k"]), s=int(d.get("s", 1)),
                                z=int(d.get("z", 0)))
                for d in doc["layers"]
            ]
        except KeyError as e:
            raise LayerShapeError(f"network document missing field {e}") from None
        return cls(name=str(doc.get("name", "network")), layers=tuple(layers))

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _chain_producers(layers):
    # Without explicit wiring, a layer consumes its predecessor when the channels agree.
    out = [None]
    for prev, cur in zip(layers, layers[1:]):
        out.append(len(out) - 1 if cur.ic == prev.k else None)
    return tuple(out[: len(layers)])


# Map from layer index to the pruned filter count.
PruneSpec = Mapping[int, int]


class _Builder:
    def __init__(self):
        self.layers: list[ConvLayerConfig] = []
        self.producers: list[int | None] = []

    def add(self, layer: ConvLayerConfig, producer: int | None) -> int:
        if producer is not None:
            assert layer.ic == self.layers[producer].k, (layer.name, layer.ic, self.layers[producer].k)
        self.layers.append(layer)
        self.producers.append(producer)
        return len(self.layers) - 1


# (group name, block count, bottleneck width, expansion width, output size)
RESNET50_GROUPS = (
    ("conv2", 3, 64, 256, 56),
    ("conv3", 4, 128, 512, 28),
    ("conv4", 6, 256, 1024, 14),
    ("conv5", 3, 512, 2048, 7),
)


def build_resnet50(with_shortcuts: bool = False) -> NetworkModel:
    """ResNet-50 convolution layers (no pooling/FC/BN).

    The default census is the 49-layer main path; stride 2 sits in the first
    1x1 of conv3..conv5. ``with_shortcuts`` appends the four projection 1x1
    convolutions at the end, flagged ``shortcut=True``.
    """
    b = _Builder()
    locked = set()
    conv1 = b.add(ConvLayerConfig("conv1", il=224, ic=3, fl=7, k=64, s=2, z=3), None)
    # conv1 (112x112) -> max pool -> 56x56; the pool is not modelled so the
    # producer link stays (IC matches, IL does not).
    prev, il = conv1, 56
    shortcut_specs = []
    for gi, (gname, nblocks, width, expand, out_size) in enumerate(RESNET50_GROUPS):
        for bi in range(nblocks):
            s = 2 if (gi > 0 and bi == 0) else 1
            tag = f"{gname}_{bi + 1}"
            ic = b.layers[prev].k
            if bi == 0:
                shortcut_specs.append((f"{gname}_proj", il, ic, expand, s, prev))
            a = b.add(ConvLayerConfig(f"{tag}a_1x1", il=il, ic=ic, fl=1, k=width, s=s, z=0), prev)
            il = b.layers[a].ol
            c = b.add(ConvLayerConfig(f"{tag}b_3x3", il=il, ic=width, fl=3, k=width, s=1, z=1), a)
            e = b.add(ConvLayerConfig(f"{tag}c_1x1", il=il, ic=width, fl=1, k=expand, s=1, z=0), c)
            assert b.layers[e].ol == out_size
            locked.add(e)
            prev = e
    if with_shortcuts:
        for name, sil, sic, k, s, src in shortcut_specs:
            locked.add(b.add(ConvLayerConfig(name, il=sil, ic=sic, fl=1, k=k, s=s, z=0, shortcut=True), src))
    return NetworkModel("resnet50", tuple(b.layers), tuple(b.producers), frozenset(locked))


VGG16_LAYERS = (
    (64, 3, 224), (64, 64, 224),
    (128, 64, 112), (128, 128, 112),
    (256, 128, 56), (256, 256, 56), (256, 256, 56),
    (512, 256, 28), (512, 512, 28), (512, 512, 28),
    (512, 512, 14), (512, 512, 14), (512, 512, 14),
)


def build_vgg16() -> NetworkModel:
    b = _Builder()
    prev = None
    for i, (k, ic, il) in enumerate(VGG16_LAYERS):
        producer = prev if prev is not None and b.layers[prev].k == ic else None
        prev = b.add(ConvLayerConfig(f"conv{i + 1}_{k}-{ic}-{il}", il=il, ic=ic, fl=3, k=k, s=1, z=1), producer)
    return NetworkModel("vgg16", tuple(b.layers), tuple(b.producers))


def resnet50_sparse_spec(net: NetworkModel | None = None) -> dict[int, int]:
    """Halve the first two convolutions of every bottleneck block."""
    net = net or build_resnet50()
    spec = {}
    for i, layer in enumerate(net.layers):
        if layer.shortcut or layer.name == "conv1":
            continue
        if layer.name.endswith(("a_1x1", "b_3x3")):
            spec[i] = layer.k // 2
    return spec


def apply_channel_pruning(net: NetworkModel, spec: PruneSpec) -> NetworkModel:
    layers = list(net.layers)
    for i, k in spec.items():
        if not 0 <= i < len(layers):
            raise LayerShapeError(f"prune index {i} out of range")
        if not 1 <= k <= net.layers[i].k:
            raise LayerShapeError(f"{net.layers[i].name}: pruned K={k} not in [1, {net.layers[i].k}]")
        if i in net.locked and k != net.layers[i].k:
            raise LayerShapeError(f"{net.layers[i].name}: output feeds a residual sum and cannot be pruned")
        layers[i] = replace(layers[i], k=k)
    for i, p in enumerate(net.producers):
        if p is not None and p in spec:
            if net.layers[i].ic != net.layers[p].k:
                raise LayerShapeError(f"{net.layers[i].name}: IC does not chain from {net.layers[p].name}")
            layers[i] = replace(layers[i], ic=layers[p].k)
    return NetworkModel(net.name if not spec else f"{net.name}-pruned", tuple(layers),
                        net.producers, net.locked)


def build_resnet50_sparse(with_shortcuts: bool = False) -> NetworkModel:
    net = build_resnet50(with_shortcuts)
    pruned = apply_channel_pruning(net, resnet50_sparse_spec(net))
    return replace(pruned, name="resnet50-sparse")


BUILTINS = {
    "resnet50": build_resnet50,
    "resnet50-sparse": build_resnet50_sparse,
    "vgg16": build_vgg16,
}


def builtin_network(name: str, pruned: bool = False, with_shortcuts: bool = False) -> NetworkModel:
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin network {name!r}; choose from {sorted(BUILTINS)}")
    if name == "vgg16":
        if pruned or with_shortcuts:
            raise ValueError("vgg16 has no built-in prune spec or shortcuts")
        return build_vgg16()
    if pruned or name == "resnet50-sparse":
        return build_resnet50_sparse(with_shortcuts)
    return build_resnet50(with_shortcuts)


def census(layers: Sequence[ConvLayerConfig]) -> dict[int, int]:
    out: dict[int, int] = {}
    for l in layers:
        out[l.fl] = out.get(l.fl, 0) + 1
    return out
