"""Unified AIMC/DIMC datapath energy model and macro-level peak performance.

The model covers the in-array multiplication cost (wordline/bitline charging
plus per-cell multiplier logic for digital arrays), the accumulation cost
(ADC conversions for analog arrays, adder trees for both), and the DAC
peripherals of multi-bit analog arrays.  Cycle counts are supplied by the
mapping layer; every operation here is a pure function of its inputs.

Conventions:
  * strict SI units (J, F, V, Hz);
  * 1 MAC = 2 ops for all TOP/s and TOP/s/W figures;
  * an :class:`EnergyBreakdown` describes ONE active macro executing the
    cycle counts it is given; callers scale by the number of active macros.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import InputError
from .tech import AIMC, DIMC, ModelConstants, TechnologyProfile

logger = logging.getLogger(__name__)

OPS_PER_MAC = 2


@dataclass(frozen=True)
class MacroSpec:
    """Geometry and paradigm of one IMC macro array.

    rows x cols memory cells; row_mux rows share one vector-MAC slot
    (analog arrays activate all rows at once, so row_mux = 1 there);
    weight_bits adjacent columns store one weight operand.
    """

    paradigm: str
    rows: int
    cols: int
    row_mux: int
    weight_bits: int
    input_bits: int
    adc_res: int
    dac_res: int
    vdd: float
    f_clk: float
    macros: int = 1
    adc_share: int = 1

    def __post_init__(self):
        if self.paradigm not in (AIMC, DIMC):
            raise ValueError(f"paradigm must be {AIMC!r} or {DIMC!r}, got {self.paradigm!r}")
        for name in ("rows", "cols", "row_mux", "weight_bits", "input_bits", "macros", "adc_share"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vdd < 0:
            raise ValueError(f"vdd must be >= 0, got {self.vdd}")
        if self.f_clk <= 0:
            raise ValueError(f"f_clk must be > 0, got {self.f_clk}")
        if self.cols % self.weight_bits != 0:
            raise ValueError(f"cols ({self.cols}) must be a multiple of weight_bits ({self.weight_bits})")
        if self.rows % self.row_mux != 0:
            raise ValueError(f"rows ({self.rows}) must be a multiple of row_mux ({self.row_mux})")
        if self.paradigm == AIMC:
            if self.row_mux != 1:
                raise ValueError("AIMC requires row_mux = 1")
            if self.adc_res < 1 or self.dac_res < 1:
                raise ValueError("AIMC requires adc_res >= 1 and dac_res >= 1")
        else:
            if self.adc_res != 0 or self.dac_res != 0:
                raise ValueError("DIMC requires adc_res = 0 and dac_res = 0")

    @property
    def d1(self) -> int:
        """Operands per row: the activation-propagation axis."""
        return self.cols // self.weight_bits

    @property
    def d2(self) -> int:
        """Accumulation axis length (rows participating in one vector MAC)."""
        return self.rows // self.row_mux

    @property
    def serial_phases_peak(self) -> int:
        """Input phases needed for one native-precision presentation."""
        return serial_phases(self, self.input_bits)

    @property
    def cells(self) -> int:
        return self.rows * self.cols * self.macros


@dataclass(frozen=True)
class DerivedGeometry:
    """D1/D2 axes of an array, kept as an explicit record for reports."""

    d1: int
    d2: int

    @classmethod
    def of(cls, spec: MacroSpec) -> "DerivedGeometry":
        return cls(d1=spec.d1, d2=spec.d2)


def serial_phases(spec: MacroSpec, input_bits: int) -> int:
    """Cycles over which one input operand streams into the array.

    Analog arrays convert dac_res bits per phase; digital arrays are
    bit-serial on the inputs.
    """
    if input_bits < 1:
        raise ValueError(f"input_bits must be >= 1, got {input_bits}")
    if spec.paradigm == AIMC:
        return math.ceil(input_bits / spec.dac_res)
    return input_bits


@dataclass(frozen=True)
class CycleCounts:
    """Mapping-dependent activity of ONE active macro.

    prech_cycles counts bitline precharge events, acc_cycles adder-tree
    activations, dac_conversions complete DAC conversion events (aggregated
    over all row DACs), total_macs the MACs assigned to the macro, and
    presentations the distinct input vectors applied.
    """

    prech_cycles: int
    acc_cycles: int
    dac_conversions: int
    total_macs: int
    presentations: int

    def __post_init__(self):
        for name in ("prech_cycles", "acc_cycles", "dac_conversions", "total_macs", "presentations"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Datapath energy of one macro execution, in joules.

    The aggregate identities hold exactly by construction:
    e_total = e_mul + e_acc + e_peripherals, e_mul = e_cell + e_logic,
    e_acc = e_adc + e_adder_tree, e_peripherals = e_dac.
    """

    e_wl: float
    e_bl: float
    e_cell: float
    e_logic: float
    e_mul: float
    e_adc: float
    e_adder_tree: float
    e_acc: float
    e_dac: float
    e_peripherals: float
    e_total: float

    FIELDS = ("e_wl", "e_bl", "e_cell", "e_logic", "e_mul", "e_adc",
              "e_adder_tree", "e_acc", "e_dac", "e_peripherals", "e_total")

    def __post_init__(self):
        for name in self.FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def compose(cls, e_wl: float, e_bl: float, e_cell: float, e_logic: float,
                e_adc: float, e_adder_tree: float, e_dac: float) -> "EnergyBreakdown":
        e_mul = e_cell + e_logic
        e_acc = e_adc + e_adder_tree
        e_peripherals = e_dac
        return cls(e_wl=e_wl, e_bl=e_bl, e_cell=e_cell, e_logic=e_logic, e_mul=e_mul,
                   e_adc=e_adc, e_adder_tree=e_adder_tree, e_acc=e_acc,
                   e_dac=e_dac, e_peripherals=e_peripherals,
                   e_total=e_mul + e_acc + e_peripherals)

    def scaled(self, factor: float) -> "EnergyBreakdown":
        """Same breakdown multiplied through (e.g. by an active-macro count)."""
        return EnergyBreakdown(**{name: getattr(self, name) * factor for name in self.FIELDS})

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}


# ---------------------------------------------------------------------------
# Component energies
# ---------------------------------------------------------------------------

def cell_energy(spec: MacroSpec, tech: TechnologyProfile,
                cc: CycleCounts) -> tuple[float, float, float]:
    """Wordline/bitline charging energy of the cell array.

    Per precharge event the wordlines swing across the physical row
    (weight_bits * d1 cells) and the bitlines across the physical column
    (d2 * row_mux cells), regardless of how much of the array the mapping
    fills.
    """
    v2 = spec.vdd ** 2
    e_wl_event = tech.c_wl * v2 * spec.weight_bits * spec.d1
    e_bl_event = tech.c_bl * v2 * spec.weight_bits * spec.d2 * spec.row_mux
    e_wl = e_wl_event * cc.prech_cycles
    e_bl = e_bl_event * cc.prech_cycles
    return e_wl, e_bl, e_wl + e_bl


def logic_energy(spec: MacroSpec, tech: TechnologyProfile, cc: CycleCounts,
                 constants: ModelConstants) -> float:
    """Per-cell multiplier logic; analog arrays multiply in the cell itself."""
    if spec.paradigm == AIMC:
        return 0.0
    g_mul = constants.g_mul_base * spec.weight_bits  # bit-serial input, 1-b gates per weight bit
    return spec.vdd ** 2 * tech.c_gate * g_mul * cc.total_macs


def adder_tree_fa_count(n_inputs: int, bits: int) -> int:
    """1-b full adders in a ripple-carry reduction tree of n_inputs operands.

    Computed by direct summation over the tree stages (the canonical form).
    Non-power-of-two widths are padded to the next power of two, which makes
    the count an upper bound for such trees.
    """
    if n_inputs < 1:
        raise ValueError(f"n_inputs must be >= 1, got {n_inputs}")
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    if n_inputs == 1:
        return 0
    padded = 1 << (n_inputs - 1).bit_length()
    if padded != n_inputs:
        logger.debug("adder tree width %d padded to %d", n_inputs, padded)
    depth = padded.bit_length() - 1
    return sum((bits + stage - 1) * (padded >> stage) for stage in range(1, depth + 1))


def _tree_shape(spec: MacroSpec) -> tuple[int, int]:
    """(inputs, operand bits) of the reduction tree for this paradigm.

    Digital arrays accumulate down the rows; analog arrays only combine the
    adjacent weight-bit bitlines after conversion.
    """
    if spec.paradigm == DIMC:
        return spec.d2, spec.weight_bits
    return spec.weight_bits, spec.adc_res


def adder_tree_energy(spec: MacroSpec, tech: TechnologyProfile, cc: CycleCounts,
                      constants: ModelConstants) -> float:
    n_inputs, bits = _tree_shape(spec)
    if n_inputs == 1:
        return 0.0
    fa_count = adder_tree_fa_count(n_inputs, bits)
    return tech.c_gate * constants.g_fa * spec.vdd ** 2 * spec.d1 * fa_count * cc.acc_cycles


def adc_energy(spec: MacroSpec, cc: CycleCounts, constants: ModelConstants) -> float:
    """Analog-to-digital conversion cost, one conversion per bitline.

    adc_share > 1 models designs that share one converter across that many
    bitlines.
    """
    if spec.paradigm == DIMC:
        return 0.0
    per_conversion = constants.k1 * spec.adc_res + constants.k2 * 4 ** spec.adc_res
    return (per_conversion * spec.vdd ** 2 * spec.weight_bits
            * (cc.total_macs / spec.d2) / spec.adc_share)


def dac_energy(spec: MacroSpec, cc: CycleCounts, constants: ModelConstants) -> float:
    """Digital-to-analog conversion cost of multi-bit analog arrays.

    Digital arrays and bit-serial (1-b input) analog arrays drive plain
    wordline pulses instead of converting, so they carry no DAC term.
    """
    if spec.paradigm == DIMC or spec.dac_res <= 1:
        return 0.0
    return constants.k3 * spec.dac_res * spec.vdd ** 2 * cc.dac_conversions


def total_energy(spec: MacroSpec, tech: TechnologyProfile, cc: CycleCounts,
                 constants: ModelConstants) -> EnergyBreakdown:
    """Full datapath breakdown for one macro executing the given cycle counts."""
    e_wl, e_bl, e_cell = cell_energy(spec, tech, cc)
    return EnergyBreakdown.compose(
        e_wl=e_wl,
        e_bl=e_bl,
        e_cell=e_cell,
        e_logic=logic_energy(spec, tech, cc, constants),
        e_adc=adc_energy(spec, cc, constants),
        e_adder_tree=adder_tree_energy(spec, tech, cc, constants),
        e_dac=dac_energy(spec, cc, constants),
    )


# ---------------------------------------------------------------------------
# Peak performance
# ---------------------------------------------------------------------------

def peak_cycle_counts(spec: MacroSpec) -> CycleCounts:
    """Full-utilization single-tile activity of one macro.

    Corresponds to a dense synthetic layer that exactly fills the array
    (K = d1 output channels, C = rows input channels, everything else 1)
    presented once, with the weight tile loaded once.
    """
    phases = spec.serial_phases_peak
    total_macs = spec.d1 * spec.d2 * spec.row_mux
    if spec.paradigm == AIMC:
        prech = phases
        dac_conv = spec.d2 * spec.row_mux * phases
    else:
        prech = spec.row_mux  # one weight-tile activation touches each muxed row group
        dac_conv = 0
    return CycleCounts(prech_cycles=prech, acc_cycles=phases, dac_conversions=dac_conv,
                       total_macs=total_macs, presentations=1)


def peak_compute_cycles(spec: MacroSpec) -> int:
    """Clock cycles for the full-utilization single tile."""
    return spec.serial_phases_peak * spec.row_mux


@dataclass(frozen=True)
class PeakResult:
    """Macro-level peak figures: tops in op/s, topsw in op/J (1 MAC = 2 ops)."""

    tops: float
    topsw: float
    macs_per_cycle: float
    breakdown: EnergyBreakdown
    cycles: int


def peak_performance(spec: MacroSpec, tech: TechnologyProfile,
                     constants: ModelConstants) -> PeakResult:
    cc = peak_cycle_counts(spec)
    breakdown = total_energy(spec, tech, cc, constants)
    cycles = peak_compute_cycles(spec)
    macs_per_cycle = cc.total_macs / cycles
    tops = OPS_PER_MAC * macs_per_cycle * spec.f_clk * spec.macros
    topsw = (OPS_PER_MAC * cc.total_macs / breakdown.e_total
             if breakdown.e_total > 0 else math.inf)
    return PeakResult(tops=tops, topsw=topsw, macs_per_cycle=macs_per_cycle,
                      breakdown=breakdown, cycles=cycles)


# ---------------------------------------------------------------------------
# arch.toml
# ---------------------------------------------------------------------------

_ARCH_REQUIRED = ("paradigm", "rows", "cols", "weight_bits", "input_bits", "vdd", "f_clk")


def load_arch(path: str | Path) -> tuple[MacroSpec, float]:
    """Read an arch.toml, returning the macro spec and its technology node (nm)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"arch file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: invalid TOML: {exc}") from exc
    macro = raw.get("macro")
    if not isinstance(macro, dict):
        raise InputError(f"{path}: missing [macro] table")
    missing = [key for key in _ARCH_REQUIRED if key not in macro]
    if missing:
        raise InputError(f"{path}: [macro] missing fields {missing}")
    if "node" not in raw:
        raise InputError(f"{path}: missing top-level 'node' (technology node in nm)")
    try:
        spec = MacroSpec(
            paradigm=str(macro["paradigm"]),
            rows=int(macro["rows"]),
            cols=int(macro["cols"]),
            row_mux=int(macro.get("row_mux", 1)),
            weight_bits=int(macro["weight_bits"]),
            input_bits=int(macro["input_bits"]),
            adc_res=int(macro.get("adc_res", 0)),
            dac_res=int(macro.get("dac_res", 0)),
            vdd=float(macro["vdd"]),
            f_clk=float(macro["f_clk"]),
            macros=int(macro.get("macros", 1)),
            adc_share=int(macro.get("adc_share", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: [macro]: {exc}") from exc
    if spec.vdd <= 0:
        raise InputError(f"{path}: field vdd: must be > 0, got {spec.vdd}")
    node = float(raw["node"])
    if node <= 0:
        raise InputError(f"{path}: field node: must be > 0, got {node}")
    return spec, node
