"""Mapping search, memory-traffic model, network reports, and corpus validation.

The macro datapath is costed by :mod:`imc_forge.cost_model`; this module adds
the traffic between the macro and the memory level directly above it, searches
the mapping candidates per layer, and aggregates network-level results.

Determinism: candidate evaluation may fan out to worker threads, but results
are reduced in candidate order with a lexicographic tie-break, so reports are
byte-identical for any thread count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import cost_model, mapping
from .cost_model import EnergyBreakdown, MacroSpec
from .errors import InfeasibleLayerError, InputError, InsufficientDataError, MappingRejected
from .fitting import spec_for_datapoint
from .mapping import (MapperConfig, DEFAULT_MAPPER_CONFIG, REDUCTION_DIMS, OUTPUT_DIMS,
                      SpatialMapping, TemporalMapping, Utilization)
from .tech import FitDatapoint, LinearFit, ModelConstants, TechnologyProfile, profile_for
from .units import joules_to_fj
from .workload import LayerWorkload, Network, total_macs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MemoryLevelSpec:
    """One memory level above the macro.

    Energies are J/bit; capacity is in bits (None = unbounded).
    """

    name: str
    bits_per_word: int = 64
    energy_per_bit_read: float = 25e-15
    energy_per_bit_write: float = 30e-15
    capacity: int | None = None

    def __post_init__(self):
        if self.bits_per_word < 1:
            raise ValueError("bits_per_word must be >= 1")
        if self.energy_per_bit_read < 0 or self.energy_per_bit_write < 0:
            raise ValueError("per-bit energies must be >= 0")


# Default two-level view: the macro talks to one on-chip SRAM.  The per-bit
# energies are working assumptions for a mid-size 28 nm SRAM, not fitted
# values; override them via --hierarchy for serious studies.
DEFAULT_HIERARCHY = (MemoryLevelSpec(name="onchip_sram"),)


@dataclass(frozen=True)
class TrafficReport:
    """Bit traffic between the macro and the level above, with energies in J."""

    weight_write_bits: int
    input_read_bits: int
    output_write_bits: int
    psum_rw_bits: int
    weight_energy: float
    input_energy: float
    output_energy: float
    psum_energy: float

    @property
    def total_energy(self) -> float:
        return self.weight_energy + self.input_energy + self.output_energy + self.psum_energy

    def as_dict(self) -> dict[str, float]:
        return {
            "weight_write_bits": self.weight_write_bits,
            "input_read_bits": self.input_read_bits,
            "output_write_bits": self.output_write_bits,
            "psum_rw_bits": self.psum_rw_bits,
            "weight_energy": self.weight_energy,
            "input_energy": self.input_energy,
            "output_energy": self.output_energy,
            "psum_energy": self.psum_energy,
        }


@dataclass(frozen=True)
class LayerResult:
    layer_name: str
    op_kind: str
    macs: int
    smap: SpatialMapping
    tmap: TemporalMapping
    breakdown: EnergyBreakdown          # aggregated over active macros
    traffic: TrafficReport
    cycles: int
    latency: float
    util: Utilization
    macros_active: int

    @property
    def energy_total_with_memory(self) -> float:
        return self.breakdown.e_total + self.traffic.total_energy


@dataclass(frozen=True)
class NetworkResult:
    network_name: str
    layers: tuple[LayerResult, ...]
    total_energy: float
    total_macro_energy: float
    total_traffic_energy: float
    total_latency: float
    total_macs: int

    def breakdown_records(self) -> list[dict]:
        """Plot-ready stacked component rows (fJ), one per layer plus totals."""
        records = []
        keys = ("e_cell", "e_logic", "e_adc", "e_adder_tree", "e_dac")
        totals = {k: 0.0 for k in keys}
        traffic_totals = {"weight_traffic": 0.0, "input_traffic": 0.0,
                          "output_traffic": 0.0, "psum_traffic": 0.0}
        for lr in self.layers:
            row = {"layer": lr.layer_name}
            for k in keys:
                row[k] = joules_to_fj(getattr(lr.breakdown, k))
                totals[k] += row[k]
            row["weight_traffic"] = joules_to_fj(lr.traffic.weight_energy)
            row["input_traffic"] = joules_to_fj(lr.traffic.input_energy)
            row["output_traffic"] = joules_to_fj(lr.traffic.output_energy)
            row["psum_traffic"] = joules_to_fj(lr.traffic.psum_energy)
            for k in traffic_totals:
                traffic_totals[k] += row[k]
            records.append(row)
        records.append({"layer": "__total__", **totals, **traffic_totals})
        return records


# ---------------------------------------------------------------------------
# Traffic model
# ---------------------------------------------------------------------------

def _psum_bits(layer: LayerWorkload) -> int:
    depth = layer.c * layer.fx * layer.fy
    headroom = math.ceil(math.log2(depth)) if depth > 1 else 0
    return layer.b_i + layer.b_w + headroom


def _reduction_split(tmap: TemporalMapping) -> int:
    """Product of reduction loop factors that interrupt output accumulation.

    A reduction loop splits the running partial sums only when some
    output-relevant loop iterates inside (below) it.
    """
    split = 1
    output_below = False
    for dim, factor in tmap.loops:  # innermost first
        if dim in OUTPUT_DIMS:
            output_below = True
        elif dim in REDUCTION_DIMS and output_below:
            split *= factor
    return split


def traffic_for(layer: LayerWorkload, spec: MacroSpec, smap: SpatialMapping,
                tmap: TemporalMapping, hierarchy: tuple[MemoryLevelSpec, ...] = DEFAULT_HIERARCHY,
                ) -> TrafficReport:
    """Reuse analysis of the traffic between the macro and the level above it.

    Weight writes count every bit written into the arrays, including
    duplication across output-pixel-unrolled macros and rewrites when the
    temporal order revisits tiles.  Inputs are fetched fresh per presentation
    (no input buffering above the array is assumed); K-overflow macros
    multicast and are not re-counted.  Partial sums spill at accumulator
    precision whenever the temporal order interrupts a reduction.
    """
    if not hierarchy:
        raise ValueError("hierarchy must contain at least one memory level")
    level = hierarchy[0]
    res = mapping.residues(layer, smap)

    weight_tensor_bits = layer.weight_elems * layer.b_w
    duplication = smap.macro_factor("OX") * smap.macro_factor("OY")
    loads = mapping.weight_loads(tmap)
    # loads always contains the weight-relevant temporal factors; the quotient
    # is the number of times the loop order revisits already-seen tiles.
    weight_temporal = math.prod(res[d] for d in ("K", "C", "FX", "FY", "G"))
    revisit = loads // weight_temporal
    weight_write_bits = weight_tensor_bits * duplication * revisit

    distinct_input_macros = (smap.macro_factor("OX") * smap.macro_factor("OY")
                             * smap.macro_factor("G"))
    input_read_bits = (layer.b_i * layer.c * layer.fx * layer.fy
                       * res["B"] * res["K"] * res["OX"] * res["OY"] * res["G"]
                       * distinct_input_macros)

    output_write_bits = layer.output_elems * layer.b_i

    psum_bits = _psum_bits(layer)
    split = _reduction_split(tmap)
    psum_events = layer.output_elems * (split - 1)
    psum_rw_bits = 2 * psum_events * psum_bits

    if level.capacity is not None:
        footprint = (weight_tensor_bits + layer.input_elems * layer.b_i
                     + layer.output_elems * layer.b_i)
        if split > 1:
            footprint += layer.output_elems * psum_bits
        if footprint > level.capacity:
            raise MappingRejected(
                f"level {level.name}: layer footprint {footprint} bits exceeds "
                f"capacity {level.capacity} bits")

    return TrafficReport(
        weight_write_bits=weight_write_bits,
        input_read_bits=input_read_bits,
        output_write_bits=output_write_bits,
        psum_rw_bits=psum_rw_bits,
        weight_energy=weight_write_bits * level.energy_per_bit_read,
        input_energy=input_read_bits * level.energy_per_bit_read,
        output_energy=output_write_bits * level.energy_per_bit_write,
        psum_energy=psum_events * psum_bits * (level.energy_per_bit_read
                                               + level.energy_per_bit_write),
    )


# ---------------------------------------------------------------------------
# Per-layer search
# ---------------------------------------------------------------------------

def _evaluate_candidate(layer: LayerWorkload, spec: MacroSpec, tech: TechnologyProfile,
                        constants: ModelConstants, hierarchy: tuple[MemoryLevelSpec, ...],
                        smap: SpatialMapping, tmap: TemporalMapping):
    try:
        traffic = traffic_for(layer, spec, smap, tmap, hierarchy)
    except MappingRejected as rejected:
        return None, rejected.reason
    cc = mapping.extract_cycles(layer, spec, smap, tmap)
    per_macro = cost_model.total_energy(spec, tech, cc, constants)
    active = max(1, smap.macro_product)
    breakdown = per_macro.scaled(active)
    cycles = mapping.compute_cycles(spec, layer, tmap)
    result = LayerResult(
        layer_name=layer.name,
        op_kind=layer.op_kind,
        macs=total_macs(layer),
        smap=smap,
        tmap=tmap,
        breakdown=breakdown,
        traffic=traffic,
        cycles=cycles,
        latency=cycles / spec.f_clk,
        util=mapping.utilization(layer, spec, smap),
        macros_active=active,
    )
    return result, None


def optimize_layer(layer: LayerWorkload, spec: MacroSpec, tech: TechnologyProfile,
                   constants: ModelConstants,
                   hierarchy: tuple[MemoryLevelSpec, ...] = DEFAULT_HIERARCHY,
                   *, config: MapperConfig = DEFAULT_MAPPER_CONFIG,
                   threads: int = 1) -> LayerResult:
    """Exhaustively evaluate the candidate mappings and return the energy argmin.

    Ties are broken lexicographically on the factor tuples so outputs are
    reproducible run to run and across thread counts.
    """
    candidates = [(smap, tmap)
                  for smap in mapping.enumerate_spatial(layer, spec, config)
                  for tmap in mapping.temporal_mappings(layer, smap)]

    def run(pair):
        return _evaluate_candidate(layer, spec, tech, constants, hierarchy, *pair)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evaluated = list(pool.map(run, candidates, chunksize=64))
    else:
        evaluated = [run(pair) for pair in candidates]

    best: LayerResult | None = None
    best_key = None
    rejection_reasons: list[str] = []
    for result, reason in evaluated:
        if result is None:
            rejection_reasons.append(reason)
            continue
        key = (result.energy_total_with_memory, result.smap.sort_key(), result.tmap.policy)
        if best_key is None or key < best_key:
            best, best_key = result, key
    if best is None:
        constraint = rejection_reasons[0] if rejection_reasons else "no legal candidate"
        raise InfeasibleLayerError(
            f"layer {layer.name!r}: all {len(candidates)} mapping candidates rejected "
            f"(binding constraint: {constraint})")
    return best


def evaluate_network(network: Network, spec: MacroSpec, tech: TechnologyProfile,
                     constants: ModelConstants,
                     hierarchy: tuple[MemoryLevelSpec, ...] = DEFAULT_HIERARCHY,
                     *, config: MapperConfig = DEFAULT_MAPPER_CONFIG,
                     threads: int = 1) -> NetworkResult:
    """Optimize every compute layer and aggregate totals (sequential latency)."""
    layers = []
    for layer in network.compute_layers():
        layers.append(optimize_layer(layer, spec, tech, constants, hierarchy,
                                     config=config, threads=threads))
    return NetworkResult(
        network_name=network.name,
        layers=tuple(layers),
        total_energy=sum(lr.energy_total_with_memory for lr in layers),
        total_macro_energy=sum(lr.breakdown.e_total for lr in layers),
        total_traffic_energy=sum(lr.traffic.total_energy for lr in layers),
        total_latency=sum(lr.latency for lr in layers),
        total_macs=sum(lr.macs for lr in layers),
    )


# ---------------------------------------------------------------------------
# Cross-design helpers and corpus validation
# ---------------------------------------------------------------------------

def scale_to_equal_cells(specs: list[MacroSpec]) -> list[tuple[MacroSpec, float]]:
    """Rescale macro counts so every design holds the same total SRAM cells.

    Targets the largest design, rounding half-up to whole macros; the exact
    scale factor is returned alongside each spec.
    """
    if not specs:
        return []
    target = max(spec.cells for spec in specs)
    out = []
    for spec in specs:
        exact_macros = target / (spec.rows * spec.cols)
        macros = max(1, int(math.floor(exact_macros + 0.5)))
        out.append((replace(spec, macros=macros), exact_macros / spec.macros))
    return out


@dataclass(frozen=True)
class ValidationRow:
    name: str
    paradigm: str
    node: float
    v: float
    modeled_topsw: float       # TOP/s/W
    reported_topsw: float      # TOP/s/W
    mismatch: float            # modeled/reported - 1
    extrapolated: bool


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple[ValidationRow, ...]
    mean_abs_mismatch: float
    max_abs_mismatch: float


def validate_against(datapoints: list[FitDatapoint], cinv_fit: LinearFit,
                     constants: ModelConstants) -> ValidationReport:
    """Modeled vs reported peak efficiency for every datapoint."""
    if not datapoints:
        raise InsufficientDataError("no datapoints to validate against")
    rows = []
    for point in datapoints:
        profile = profile_for(point.node, cinv_fit, v_nominal=point.v)
        spec = spec_for_datapoint(point)
        peak = cost_model.peak_performance(spec, profile, constants)
        modeled = peak.topsw / 1e12
        reported = point.reported_efficiency
        rows.append(ValidationRow(
            name=point.name, paradigm=point.paradigm, node=point.node, v=point.v,
            modeled_topsw=modeled, reported_topsw=reported,
            mismatch=modeled / reported - 1.0,
            extrapolated=bool(profile.warnings),
        ))
    abs_mismatches = [abs(r.mismatch) for r in rows]
    return ValidationReport(rows=tuple(rows),
                            mean_abs_mismatch=sum(abs_mismatches) / len(abs_mismatches),
                            max_abs_mismatch=max(abs_mismatches))


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

# Stable column order of report.csv (documented in the README).
REPORT_COLUMNS = (
    "network", "layer", "op_kind", "macs", "macros_active", "cycles", "latency_s",
    "util_row", "util_col", "util_macro", "util_overall",
    "e_wl_fj", "e_bl_fj", "e_cell_fj", "e_logic_fj", "e_mul_fj",
    "e_adc_fj", "e_adder_tree_fj", "e_acc_fj", "e_dac_fj", "e_peripherals_fj",
    "e_macro_total_fj",
    "weight_write_bits", "input_read_bits", "output_write_bits", "psum_rw_bits",
    "weight_traffic_fj", "input_traffic_fj", "output_traffic_fj", "psum_traffic_fj",
    "traffic_total_fj", "energy_total_fj",
    "spatial_mapping", "temporal_mapping",
)


def _format_mapping(smap: SpatialMapping) -> str:
    parts = []
    for label, axis in (("col", smap.col_unroll), ("row", smap.row_unroll),
                        ("macro", smap.macro_unroll)):
        if axis:
            parts.append(label + "[" + " ".join(f"{d}:{f}" for d, f in axis) + "]")
    return " ".join(parts) if parts else "none"


def _format_temporal(tmap: TemporalMapping) -> str:
    if not tmap.loops:
        return f"none ({tmap.policy})"
    return " ".join(f"{d}:{f}" for d, f in tmap.loops) + f" ({tmap.policy})"


def report_rows(result: NetworkResult) -> list[dict]:
    rows = []
    for lr in result.layers:
        rows.append({
            "network": result.network_name,
            "layer": lr.layer_name,
            "op_kind": lr.op_kind,
            "macs": lr.macs,
            "macros_active": lr.macros_active,
            "cycles": lr.cycles,
            "latency_s": lr.latency,
            "util_row": lr.util.row_util,
            "util_col": lr.util.col_util,
            "util_macro": lr.util.macro_util,
            "util_overall": lr.util.overall,
            "e_wl_fj": joules_to_fj(lr.breakdown.e_wl),
            "e_bl_fj": joules_to_fj(lr.breakdown.e_bl),
            "e_cell_fj": joules_to_fj(lr.breakdown.e_cell),
            "e_logic_fj": joules_to_fj(lr.breakdown.e_logic),
            "e_mul_fj": joules_to_fj(lr.breakdown.e_mul),
            "e_adc_fj": joules_to_fj(lr.breakdown.e_adc),
            "e_adder_tree_fj": joules_to_fj(lr.breakdown.e_adder_tree),
            "e_acc_fj": joules_to_fj(lr.breakdown.e_acc),
            "e_dac_fj": joules_to_fj(lr.breakdown.e_dac),
            "e_peripherals_fj": joules_to_fj(lr.breakdown.e_peripherals),
            "e_macro_total_fj": joules_to_fj(lr.breakdown.e_total),
            "weight_write_bits": lr.traffic.weight_write_bits,
            "input_read_bits": lr.traffic.input_read_bits,
            "output_write_bits": lr.traffic.output_write_bits,
            "psum_rw_bits": lr.traffic.psum_rw_bits,
            "weight_traffic_fj": joules_to_fj(lr.traffic.weight_energy),
            "input_traffic_fj": joules_to_fj(lr.traffic.input_energy),
            "output_traffic_fj": joules_to_fj(lr.traffic.output_energy),
            "psum_traffic_fj": joules_to_fj(lr.traffic.psum_energy),
            "traffic_total_fj": joules_to_fj(lr.traffic.total_energy),
            "energy_total_fj": joules_to_fj(lr.energy_total_with_memory),
            "spatial_mapping": _format_mapping(lr.smap),
            "temporal_mapping": _format_temporal(lr.tmap),
        })
    return rows


def render_report_json(results: list[NetworkResult], *, arch_label: str = "") -> str:
    payload = {
        "format": "imc-forge-report",
        "version": 1,
        "arch": arch_label,
        "networks": [
            {
                "name": result.network_name,
                "totals": {
                    "energy_j": result.total_energy,
                    "macro_energy_j": result.total_macro_energy,
                    "traffic_energy_j": result.total_traffic_energy,
                    "latency_s": result.total_latency,
                    "macs": result.total_macs,
                },
                "layers": report_rows(result),
            }
            for result in results
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def render_report_csv(results: list[NetworkResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for result in results:
        for row in report_rows(result):
            writer.writerow(row)
    return buf.getvalue()


def write_report(path: str | Path, results: list[NetworkResult], fmt: str,
                 *, arch_label: str = "") -> None:
    if fmt == "json":
        text = render_report_json(results, arch_label=arch_label)
    elif fmt == "csv":
        text = render_report_csv(results)
    else:
        raise InputError(f"unknown report format {fmt!r} (expected json or csv)")
    Path(path).write_text(text)


def load_hierarchy(path: str | Path) -> tuple[MemoryLevelSpec, ...]:
    """Read a hierarchy.json: array of memory level objects, macro-adjacent first."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"hierarchy file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, list) or not raw:
        raise InputError(f"{path}: expected a non-empty array of memory levels")
    levels = []
    for i, obj in enumerate(raw):
        try:
            levels.append(MemoryLevelSpec(
                name=str(obj.get("name", f"level{i}")),
                bits_per_word=int(obj.get("bits_per_word", 64)),
                energy_per_bit_read=float(obj["energy_per_bit_read"]),
                energy_per_bit_write=float(obj["energy_per_bit_write"]),
                capacity=int(obj["capacity"]) if obj.get("capacity") is not None else None,
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: level #{i}: {exc}") from exc
    return tuple(levels)
