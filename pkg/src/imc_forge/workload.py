"""DNN workloads as sequences of 8-nested-loop layers.

A layer is the loop nest over B (batch), K (output channels), C (input
channels), OX/OY (output pixels), FX/FY (filter taps) and G (groups), with
operand precisions attached.  Depthwise layers are encoded as G = channel
count with C = K = 1, so their lack of cross-column reuse falls out of the
mapping rules without special cases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError

LOOP_DIMS = ("B", "K", "C", "OX", "OY", "FX", "FY", "G")
OP_KINDS = ("conv", "pointwise", "depthwise", "dense", "residual-add")

# Loop bounds are kept within signed 64-bit so downstream counters stay exact.
_MACS_LIMIT = 2 ** 63 - 1


@dataclass(frozen=True)
class LayerWorkload:
    name: str
    op_kind: str
    b: int
    k: int
    c: int
    ox: int
    oy: int
    fx: int
    fy: int
    g: int
    b_i: int
    b_w: int
    strides: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.op_kind not in OP_KINDS:
            raise ValueError(f"layer {self.name!r}: op_kind must be one of {OP_KINDS}, "
                             f"got {self.op_kind!r}")
        for dim in LOOP_DIMS:
            if self.bound(dim) < 1:
                raise ValueError(f"layer {self.name!r}: loop bound {dim} must be >= 1, "
                                 f"got {self.bound(dim)}")
        if self.b_i < 1 or self.b_w < 1:
            raise ValueError(f"layer {self.name!r}: operand precisions must be >= 1")
        if any(s < 1 for s in self.strides):
            raise ValueError(f"layer {self.name!r}: strides must be >= 1")
        if self.op_kind == "pointwise" and not (self.fx == 1 and self.fy == 1):
            raise ValueError(f"layer {self.name!r}: pointwise requires FX = FY = 1")
        if self.op_kind == "dense" and not (self.ox == self.oy == self.fx == self.fy == 1):
            raise ValueError(f"layer {self.name!r}: dense requires OX = OY = FX = FY = 1")
        if self.op_kind == "depthwise" and not (self.g > 1 and self.c == 1 and self.k == 1):
            raise ValueError(f"layer {self.name!r}: depthwise requires G > 1 and C = K = 1")

    def bound(self, dim: str) -> int:
        return getattr(self, dim.lower())

    @property
    def loops(self) -> dict[str, int]:
        return {dim: self.bound(dim) for dim in LOOP_DIMS}

    @property
    def weight_elems(self) -> int:
        return self.k * self.c * self.fx * self.fy * self.g

    @property
    def output_elems(self) -> int:
        return self.b * self.k * self.ox * self.oy * self.g

    @property
    def input_elems(self) -> int:
        ix = (self.ox - 1) * self.strides[0] + self.fx
        iy = (self.oy - 1) * self.strides[1] + self.fy
        return self.b * self.c * self.g * ix * iy


def total_macs(layer: LayerWorkload) -> int:
    """Product of the eight loop bounds, checked against 64-bit overflow."""
    product = 1
    for dim in LOOP_DIMS:
        product *= layer.bound(dim)
        if product > _MACS_LIMIT:
            raise ValueError(f"layer {layer.name!r}: MAC count exceeds 2^63-1")
    return product


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[LayerWorkload, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError(f"network {self.name!r}: must contain at least one layer")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"network {self.name!r}: duplicate layer names {dupes}")

    def compute_layers(self) -> tuple[LayerWorkload, ...]:
        """Layers that map onto the arrays (residual-add is a pass-through)."""
        return tuple(l for l in self.layers if l.op_kind != "residual-add")


def _layer_from_obj(obj: dict, index: int) -> LayerWorkload:
    name = obj.get("name", f"layer{index}")
    loops = obj.get("loops")
    if not isinstance(loops, dict):
        raise InputError(f"layer {name!r}: missing 'loops' object")
    missing = [dim for dim in LOOP_DIMS if dim not in loops]
    if missing:
        raise InputError(f"layer {name!r}: loops missing {missing}")
    precision = obj.get("precision", {})
    strides = obj.get("strides", [1, 1])
    if not (isinstance(strides, list) and len(strides) == 2):
        raise InputError(f"layer {name!r}: strides must be [sx, sy]")
    try:
        return LayerWorkload(
            name=str(name),
            op_kind=str(obj.get("op_kind", "conv")),
            b=int(loops["B"]), k=int(loops["K"]), c=int(loops["C"]),
            ox=int(loops["OX"]), oy=int(loops["OY"]),
            fx=int(loops["FX"]), fy=int(loops["FY"]), g=int(loops["G"]),
            b_i=int(precision.get("B_i", 8)),
            b_w=int(precision.get("B_w", 8)),
            strides=(int(strides[0]), int(strides[1])),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def load_network(path: str | Path) -> Network:
    """Read and validate a network.json file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"workload file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict) or "layers" not in raw:
        raise InputError(f"{path}: expected an object with a 'layers' array")
    layers = raw["layers"]
    if not isinstance(layers, list) or not layers:
        raise InputError(f"{path}: 'layers' must be a non-empty array")
    parsed = tuple(_layer_from_obj(obj, i) for i, obj in enumerate(layers))
    try:
        return Network(name=str(raw.get("name", path.stem)), layers=parsed)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
