"""Spatial unrolling and temporal ordering of a layer onto an IMC architecture.

Axis legality follows the physics of the array: output channels (K) unroll
across columns so activations broadcast along wordlines, reduction dims
(C, FX, FY) unroll across rows so partial sums accumulate down bitlines, and
output pixels / groups (OX, OY, G, plus any K overflow) replicate across
macros at the cost of weight duplication.

Everything here is pure and deterministic; candidate lists are sorted by
spatial coverage with a lexicographic tie-break.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .cost_model import CycleCounts, MacroSpec, serial_phases
from .errors import MappingError
from .workload import LayerWorkload, total_macs

COL_DIMS = ("K",)
ROW_DIMS = ("C", "FX", "FY")
MACRO_DIMS = ("OX", "OY", "G", "K")

WEIGHT_DIMS = frozenset({"K", "C", "FX", "FY", "G"})
INPUT_DIMS = frozenset({"B", "C", "OX", "OY", "FX", "FY", "G"})
OUTPUT_DIMS = frozenset({"B", "K", "OX", "OY", "G"})
REDUCTION_DIMS = frozenset({"C", "FX", "FY"})

WEIGHT_STATIONARY = "weight-stationary"
OUTPUT_STATIONARY = "output-stationary"

# Loop orders are innermost-first.  Weight-stationary keeps the
# weight-irrelevant sweeps innermost so the resident tile is reused;
# output-stationary finishes each output's reduction before moving on.
_WS_ORDER = ("B", "OX", "OY", "FX", "FY", "C", "K", "G")
_OS_ORDER = ("FX", "FY", "C", "B", "OX", "OY", "K", "G")


@dataclass(frozen=True)
class MapperConfig:
    """Knobs of the candidate enumeration.

    allow_ceiling_split admits non-dividing fill factors (the last temporal
    iteration runs partially idle); it is off by default so that chosen
    mappings keep exact spatial x temporal factor products.
    """

    candidate_cap: int = 10_000
    axis_cap: int = 256
    allow_ceiling_split: bool = False


DEFAULT_MAPPER_CONFIG = MapperConfig()


@lru_cache(maxsize=4096)
def _divisors(n: int) -> tuple[int, ...]:
    small, large = [], []
    i = 1
    while i * i <= n:
        if n % i == 0:
            small.append(i)
            if i * i != n:
                large.append(n // i)
        i += 1
    return tuple(small + large[::-1])


@dataclass(frozen=True)
class SpatialMapping:
    """Factors per hardware axis, stored as (dim, factor) pairs.

    Factors that do not divide their loop bound are ceiling splits: the axis
    runs ceil(bound/factor) temporal iterations with idle slots in the last
    one.
    """

    col_unroll: tuple[tuple[str, int], ...]
    row_unroll: tuple[tuple[str, int], ...]
    macro_unroll: tuple[tuple[str, int], ...]

    @property
    def col_product(self) -> int:
        return math.prod(f for _, f in self.col_unroll) if self.col_unroll else 1

    @property
    def row_product(self) -> int:
        return math.prod(f for _, f in self.row_unroll) if self.row_unroll else 1

    @property
    def macro_product(self) -> int:
        return math.prod(f for _, f in self.macro_unroll) if self.macro_unroll else 1

    def spatial_factor(self, dim: str) -> int:
        product = 1
        for axis in (self.col_unroll, self.row_unroll, self.macro_unroll):
            for d, f in axis:
                if d == dim:
                    product *= f
        return product

    def macro_factor(self, dim: str) -> int:
        product = 1
        for d, f in self.macro_unroll:
            if d == dim:
                product *= f
        return product

    def sort_key(self):
        return (self.row_unroll, self.col_unroll, self.macro_unroll)

    def as_dict(self) -> dict:
        return {"columns": dict(self.col_unroll), "rows": dict(self.row_unroll),
                "macros": dict(self.macro_unroll)}


@dataclass(frozen=True)
class TemporalMapping:
    """Ordered temporal loops (innermost first) covering all residues."""

    loops: tuple[tuple[str, int], ...]
    policy: str = WEIGHT_STATIONARY

    @property
    def presentations(self) -> int:
        return math.prod(f for _, f in self.loops) if self.loops else 1

    def factor(self, dim: str) -> int:
        product = 1
        for d, f in self.loops:
            if d == dim:
                product *= f
        return product

    def as_dict(self) -> dict:
        return {"loops": [[d, f] for d, f in self.loops], "policy": self.policy}


@dataclass(frozen=True)
class Utilization:
    row_util: float
    col_util: float
    macro_util: float

    def __post_init__(self):
        for name in ("row_util", "col_util", "macro_util"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {value}")

    @property
    def overall(self) -> float:
        return self.row_util * self.col_util * self.macro_util


def residues(layer: LayerWorkload, smap: SpatialMapping) -> dict[str, int]:
    """Temporal iteration count per dim, ceiling for imperfect spatial factors."""
    return {dim: -(-layer.bound(dim) // smap.spatial_factor(dim))
            for dim in ("B", "K", "C", "OX", "OY", "FX", "FY", "G")}


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _axis_options_col(layer: LayerWorkload, spec: MacroSpec,
                      config: MapperConfig) -> list[tuple[tuple[str, int], ...]]:
    k = layer.k
    options = [((("K", f),) if f > 1 else ()) for f in _divisors(k) if f <= spec.d1]
    if config.allow_ceiling_split and k > spec.d1 and k % spec.d1 != 0:
        options.append((("K", spec.d1),))
    return _truncate_axis(options, config.axis_cap)


def _axis_options_row(layer: LayerWorkload, spec: MacroSpec,
                      config: MapperConfig) -> list[tuple[tuple[str, int], ...]]:
    cap = spec.d2 * spec.row_mux
    options: list[tuple[tuple[str, int], ...]] = []
    seen: set[tuple[int, int, int]] = set()
    fx_divs = [f for f in _divisors(layer.fx)]
    fy_divs = [f for f in _divisors(layer.fy)]
    for fx_f in fx_divs:
        for fy_f in fy_divs:
            if fx_f * fy_f > cap:
                continue
            remaining = cap // (fx_f * fy_f)
            for c_f in _divisors(layer.c):
                if c_f > remaining:
                    break
                seen.add((c_f, fx_f, fy_f))
            if config.allow_ceiling_split and layer.c > remaining and layer.c % remaining != 0:
                # fill the rows with a non-dividing channel factor; the last
                # temporal iteration runs partially idle
                seen.add((remaining, fx_f, fy_f))
    for c_f, fx_f, fy_f in sorted(seen):
        pairs = tuple((d, f) for d, f in (("C", c_f), ("FX", fx_f), ("FY", fy_f)) if f > 1)
        options.append(pairs)
    return _truncate_axis(options, config.axis_cap)


def _axis_options_macro(layer: LayerWorkload, spec: MacroSpec, col_k: int,
                        config: MapperConfig) -> list[tuple[tuple[str, int], ...]]:
    k_rem = layer.k // col_k if layer.k % col_k == 0 else 1
    options = []
    for ox_f in _divisors(layer.ox):
        if ox_f > spec.macros:
            break
        for oy_f in _divisors(layer.oy):
            if ox_f * oy_f > spec.macros:
                break
            for g_f in _divisors(layer.g):
                if ox_f * oy_f * g_f > spec.macros:
                    break
                for k_f in _divisors(k_rem):
                    if ox_f * oy_f * g_f * k_f > spec.macros:
                        break
                    pairs = tuple((d, f) for d, f in
                                  (("OX", ox_f), ("OY", oy_f), ("G", g_f), ("K", k_f))
                                  if f > 1)
                    options.append(pairs)
    return _truncate_axis(options, config.axis_cap)


def _truncate_axis(options, cap):
    unique = sorted(set(options),
                    key=lambda opt: (-math.prod((f for _, f in opt), start=1), opt))
    return unique[:cap]


def enumerate_spatial(layer: LayerWorkload, spec: MacroSpec,
                      config: MapperConfig = DEFAULT_MAPPER_CONFIG) -> list[SpatialMapping]:
    """All divisor-based spatial unrollings within axis capacities.

    Sorted by spatially-mapped MACs (descending) with a lexicographic
    tie-break; truncated to config.candidate_cap; never empty.
    """
    candidates = []
    for col in _axis_options_col(layer, spec, config):
        col_k = math.prod((f for _, f in col), start=1)
        macro_options = _axis_options_macro(layer, spec, col_k, config)
        for row in _axis_options_row(layer, spec, config):
            for macro in macro_options:
                candidates.append(SpatialMapping(col_unroll=col, row_unroll=row,
                                                 macro_unroll=macro))
    candidates.sort(key=lambda m: (-(m.col_product * m.row_product * m.macro_product),
                                   m.sort_key()))
    if len(candidates) > config.candidate_cap:
        candidates = candidates[:config.candidate_cap]
    trivial = SpatialMapping((), (), ())
    if trivial not in candidates:
        candidates.append(trivial)
    return candidates


def temporal_mappings(layer: LayerWorkload, smap: SpatialMapping) -> list[TemporalMapping]:
    """Canonical temporal orderings for the residues of a spatial mapping.

    Two policies are generated: weight-stationary (output sweeps innermost)
    and output-stationary (reduction innermost).  They coincide when one of
    the bands is fully unrolled, in which case only one is returned.
    """
    res = residues(layer, smap)
    mappings = []
    for policy, order in ((WEIGHT_STATIONARY, _WS_ORDER), (OUTPUT_STATIONARY, _OS_ORDER)):
        loops = tuple((dim, res[dim]) for dim in order if res[dim] > 1)
        tmap = TemporalMapping(loops=loops, policy=policy)
        if all(existing.loops != tmap.loops for existing in mappings):
            mappings.append(tmap)
    return mappings


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_mapping(layer: LayerWorkload, spec: MacroSpec, smap: SpatialMapping,
                     tmap: TemporalMapping | None = None) -> None:
    """Raise MappingError unless (smap, tmap) is legal for (layer, spec)."""
    for dim, _ in smap.col_unroll:
        if dim not in COL_DIMS:
            raise MappingError(f"dim {dim} is not legal on the column axis")
    for dim, _ in smap.row_unroll:
        if dim not in ROW_DIMS:
            raise MappingError(f"dim {dim} is not legal on the row axis")
    for dim, _ in smap.macro_unroll:
        if dim not in MACRO_DIMS:
            raise MappingError(f"dim {dim} is not legal on the macro axis")
    if smap.col_product > spec.d1:
        raise MappingError(f"column unroll {smap.col_product} exceeds D1 = {spec.d1}")
    if smap.row_product > spec.d2 * spec.row_mux:
        raise MappingError(f"row unroll {smap.row_product} exceeds D2*M = {spec.d2 * spec.row_mux}")
    if smap.macro_product > spec.macros:
        raise MappingError(f"macro unroll {smap.macro_product} exceeds macro count {spec.macros}")
    for axis in (smap.col_unroll, smap.row_unroll, smap.macro_unroll):
        for dim, factor in axis:
            if factor < 1 or factor > layer.bound(dim):
                raise MappingError(f"factor {dim}:{factor} outside [1, {layer.bound(dim)}]")
    for dim, factor in smap.macro_unroll:
        remaining = layer.bound(dim)
        if dim == "K":
            col_k = smap.col_product
            if layer.k % col_k != 0:
                raise MappingError("K overflow onto macros requires an exact column factor")
            remaining = layer.k // col_k
        if remaining % factor != 0:
            raise MappingError(f"macro factor {dim}:{factor} must divide {remaining} exactly")
    if tmap is None:
        return
    res = residues(layer, smap)
    for dim in ("B", "K", "C", "OX", "OY", "FX", "FY", "G"):
        got = tmap.factor(dim)
        if got != res[dim]:
            raise MappingError(
                f"temporal factor for {dim} is {got}, expected residue {res[dim]}")


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def weight_loads(tmap: TemporalMapping) -> int:
    """Distinct weight-tile activations implied by the loop order.

    The resident tile survives the innermost band of weight-irrelevant loops;
    every iteration of any loop at or above the innermost weight-relevant one
    activates (and for revisits, rewrites) a tile.
    """
    loads = 1
    active = False
    for dim, factor in tmap.loops:
        if dim in WEIGHT_DIMS:
            active = True
        if active:
            loads *= factor
    return loads


def macros_active(smap: SpatialMapping) -> int:
    return smap.macro_product


def assigned_macs(layer: LayerWorkload, smap: SpatialMapping) -> int:
    """Layer MACs executed by one active macro (exact integer split)."""
    return total_macs(layer) // smap.macro_product


def extract_cycles(layer: LayerWorkload, spec: MacroSpec, smap: SpatialMapping,
                   tmap: TemporalMapping) -> CycleCounts:
    """Mapping-dependent activity counts for one active macro."""
    validate_mapping(layer, spec, smap, tmap)
    presentations = tmap.presentations
    phases = serial_phases(spec, layer.b_i)
    acc = presentations * phases
    if spec.paradigm == "AIMC":
        prech = presentations * phases
        dac = spec.d2 * spec.row_mux * presentations * phases
    else:
        prech = weight_loads(tmap) * spec.row_mux
        dac = 0
    return CycleCounts(prech_cycles=prech, acc_cycles=acc, dac_conversions=dac,
                       total_macs=assigned_macs(layer, smap),
                       presentations=presentations)


def compute_cycles(spec: MacroSpec, layer: LayerWorkload, tmap: TemporalMapping) -> int:
    """Clock cycles to run the mapping (active macros run in parallel)."""
    return tmap.presentations * serial_phases(spec, layer.b_i) * spec.row_mux


def utilization(layer: LayerWorkload, spec: MacroSpec, smap: SpatialMapping) -> Utilization:
    """Fraction of each hardware axis doing useful work.

    Ceiling splits fold their idle slots in: the effective factor of a dim is
    bound/residue, which equals the spatial factor for exact divisors.
    """
    validate_mapping(layer, spec, smap)
    res = residues(layer, smap)

    def effective(axis: tuple[tuple[str, int], ...]) -> float:
        product = 1.0
        for dim, factor in axis:
            exact = layer.bound(dim) / (res[dim] * factor)
            product *= factor * min(1.0, exact)
        return product

    return Utilization(row_util=effective(smap.row_unroll) / (spec.d2 * spec.row_mux),
                       col_util=effective(smap.col_unroll) / spec.d1,
                       macro_util=effective(smap.macro_unroll) / spec.macros)
