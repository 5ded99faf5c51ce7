"""Technology-dependent constants, fitted parameters, and published-datapoint schema.

Capacitances are tied to a single reference value ``c_inv`` (the inverter
capacitance at a given node); wordline, bitline and logic-gate capacitances
are derived from it through configurable ratios.  The remaining model
constants (ADC/DAC energy coefficients, gate counts) live in
:class:`ModelConstants`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import InputError

logger = logging.getLogger(__name__)

AIMC = "AIMC"
DIMC = "DIMC"

# Default capacitance ratios relative to c_inv.  The gate ratio is the usual
# two-transistor-per-input estimate; WL/BL per-cell loads default to c_inv
# itself and can be overridden in tech.toml.
CGATE_OVER_CINV = 2.0
CWL_OVER_CINV = 1.0
CBL_OVER_CINV = 1.0

# Floor for regressed capacitances; regression lines must never produce a
# non-physical value.
CINV_FLOOR = 1e-18  # F


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class TechnologyProfile:
    """Node-dependent capacitance bundle.

    node is in nm, c_inv in F, v_nominal in V.
    """

    node: float
    c_inv: float
    v_nominal: float
    cgate_ratio: float = CGATE_OVER_CINV
    cwl_ratio: float = CWL_OVER_CINV
    cbl_ratio: float = CBL_OVER_CINV
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        _require_positive(node=self.node, c_inv=self.c_inv, v_nominal=self.v_nominal,
                          cgate_ratio=self.cgate_ratio, cwl_ratio=self.cwl_ratio,
                          cbl_ratio=self.cbl_ratio)

    @property
    def c_gate(self) -> float:
        return self.cgate_ratio * self.c_inv

    @property
    def c_wl(self) -> float:
        return self.cwl_ratio * self.c_inv

    @property
    def c_bl(self) -> float:
        return self.cbl_ratio * self.c_inv


@dataclass(frozen=True)
class ModelConstants:
    """Fitted/assumed scalar constants of the energy model.

    k1: J per ADC resolution bit, k2: J coefficient of the exponential ADC
    term, k3: J per DAC conversion step, g_fa / g_mul_base: gate counts of a
    1-b full adder / 1-b multiplier.
    """

    k1: float = 100e-15
    k2: float = 1e-18
    k3: float = 44e-15
    g_fa: int = 5
    g_mul_base: int = 1

    def __post_init__(self):
        _require_positive(k1=self.k1, k2=self.k2, k3=self.k3,
                          g_fa=self.g_fa, g_mul_base=self.g_mul_base)


@dataclass(frozen=True)
class FitDatapoint:
    """One published macro-level peak datapoint.

    reported_efficiency is in TOP/s/W exactly as published (1 MAC = 2 ops,
    50% input sparsity convention of the surveyed corpus).  reported_throughput
    (TOP/s) and reported_energy_per_op (J) are optional; the latter is derived
    from the efficiency when absent.
    """

    name: str
    paradigm: str
    node: float
    rows: int
    cols: int
    macros: int
    v: float
    b_i: int
    b_w: int
    adc_res: int
    dac_res: int
    reported_efficiency: float
    reported_throughput: float | None = None
    reported_energy_per_op: float | None = None
    row_mux: int = 1
    adc_share: int = 1
    source: str = ""

    def __post_init__(self):
        if self.paradigm not in (AIMC, DIMC):
            raise ValueError(f"datapoint {self.name!r}: paradigm must be AIMC or DIMC")
        if self.paradigm == DIMC and (self.adc_res != 0 or self.dac_res != 0):
            raise ValueError(f"datapoint {self.name!r}: DIMC requires ADC_res = DAC_res = 0")
        if not self.reported_efficiency > 0:
            raise ValueError(f"datapoint {self.name!r}: reported_efficiency must be > 0")
        _require_positive(node=self.node, rows=self.rows, cols=self.cols,
                          macros=self.macros, v=self.v, b_i=self.b_i, b_w=self.b_w,
                          row_mux=self.row_mux, adc_share=self.adc_share)

    @property
    def energy_per_op(self) -> float:
        """J per op (1 MAC = 2 ops)."""
        if self.reported_energy_per_op is not None:
            return self.reported_energy_per_op
        return 1.0 / (self.reported_efficiency * 1e12)


@dataclass(frozen=True)
class LinearFit:
    """Least-squares line c_inv(node) = slope * node + intercept.

    residuals holds the per-point relative mismatch of the model re-evaluated
    with the regressed capacitance, in the same order as the input points.
    """

    slope: float
    intercept: float
    residuals: tuple[float, ...]
    mean_abs_mismatch: float
    node_min: float
    node_max: float
    point_names: tuple[str, ...] = ()
    solved_cinv: tuple[float, ...] = ()

    def cinv_at(self, node: float, floor: float = CINV_FLOOR) -> float:
        return max(self.slope * node + self.intercept, floor)


def profile_for(node: float, fit: LinearFit, *, v_nominal: float = 0.8,
                floor: float = CINV_FLOOR,
                cgate_ratio: float = CGATE_OVER_CINV,
                cwl_ratio: float = CWL_OVER_CINV,
                cbl_ratio: float = CBL_OVER_CINV) -> TechnologyProfile:
    """Evaluate the regressed capacitance line at a node.

    Values outside the fitted node range are still computed (clamped to a
    positive floor) but carry an extrapolation warning.
    """
    warnings: tuple[str, ...] = ()
    lo, hi = fit.node_min / 2.0, fit.node_max * 2.0
    if not (fit.node_min <= node <= fit.node_max):
        msg = (f"node {node:g} nm extrapolates the fitted range "
               f"[{fit.node_min:g}, {fit.node_max:g}] nm (allowed [{lo:g}, {hi:g}])")
        warnings = (msg,)
        logger.warning(msg)
    c_inv = fit.cinv_at(node, floor)
    return TechnologyProfile(node=node, c_inv=c_inv, v_nominal=v_nominal,
                             cgate_ratio=cgate_ratio, cwl_ratio=cwl_ratio,
                             cbl_ratio=cbl_ratio, warnings=warnings)


# ---------------------------------------------------------------------------
# datapoints.json
# ---------------------------------------------------------------------------

_DATAPOINT_REQUIRED = ("name", "paradigm", "node", "geometry", "V", "B_i", "B_w",
                       "ADC_res", "DAC_res", "reported_efficiency")


def _datapoint_from_obj(obj: dict, index: int) -> FitDatapoint:
    missing = [key for key in _DATAPOINT_REQUIRED if key not in obj]
    if missing:
        raise InputError(f"datapoint #{index}: missing fields {missing}")
    geometry = obj["geometry"]
    if not (isinstance(geometry, (list, tuple)) and len(geometry) == 3):
        raise InputError(f"datapoint #{index}: geometry must be [R, C, macros]")
    try:
        return FitDatapoint(
            name=str(obj["name"]),
            paradigm=str(obj["paradigm"]),
            node=float(obj["node"]),
            rows=int(geometry[0]),
            cols=int(geometry[1]),
            macros=int(geometry[2]),
            v=float(obj["V"]),
            b_i=int(obj["B_i"]),
            b_w=int(obj["B_w"]),
            adc_res=int(obj["ADC_res"]),
            dac_res=int(obj["DAC_res"]),
            reported_efficiency=float(obj["reported_efficiency"]),
            reported_throughput=(float(obj["reported_throughput"])
                                 if obj.get("reported_throughput") is not None else None),
            reported_energy_per_op=(float(obj["reported_energy_per_op"])
                                    if obj.get("reported_energy_per_op") is not None else None),
            row_mux=int(obj.get("M", 1)),
            adc_share=int(obj.get("adc_share", 1)),
            source=str(obj.get("source", "")),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"datapoint #{index} ({obj.get('name', '?')}): {exc}") from exc


def load_datapoints(path: str | Path) -> list[FitDatapoint]:
    """Read a datapoints.json file.

    Accepts either a bare JSON array of datapoint objects or the versioned
    wrapper ``{"version": 1, "sparsity_convention": 0.5, "datapoints": [...]}``.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"datapoints file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(raw, dict):
        items = raw.get("datapoints")
        if items is None:
            raise InputError(f"{path}: wrapper object has no 'datapoints' array")
    else:
        items = raw
    if not isinstance(items, list) or not items:
        raise InputError(f"{path}: expected a non-empty array of datapoints")
    return [_datapoint_from_obj(obj, i) for i, obj in enumerate(items)]


# ---------------------------------------------------------------------------
# tech.toml
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TechConfig:
    """Parsed tech.toml: constants plus either a fitted line, a fixed profile, or both."""

    constants: ModelConstants = field(default_factory=ModelConstants)
    cinv_fit: LinearFit | None = None
    profile: TechnologyProfile | None = None
    cgate_ratio: float = CGATE_OVER_CINV
    cwl_ratio: float = CWL_OVER_CINV
    cbl_ratio: float = CBL_OVER_CINV
    v_nominal: float = 0.8

    def profile_for_node(self, node: float) -> TechnologyProfile:
        if self.cinv_fit is not None:
            return profile_for(node, self.cinv_fit, v_nominal=self.v_nominal,
                               cgate_ratio=self.cgate_ratio, cwl_ratio=self.cwl_ratio,
                               cbl_ratio=self.cbl_ratio)
        if self.profile is not None:
            if not math.isclose(self.profile.node, node, rel_tol=1e-9):
                logger.warning("tech profile is for %g nm but architecture requests %g nm; "
                               "using the fixed profile value", self.profile.node, node)
            return replace(self.profile, node=node)
        raise InputError("tech config defines neither a cinv fit nor a fixed profile")


def load_tech_config(path: str | Path) -> TechConfig:
    path = Path(path)
    if not path.exists():
        raise InputError(f"tech file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: invalid TOML: {exc}") from exc

    def bad(field_name: str, why: str) -> InputError:
        return InputError(f"{path}: field {field_name}: {why}")

    constants_tbl = raw.get("constants", {})
    try:
        constants = ModelConstants(
            k1=float(constants_tbl.get("k1", ModelConstants.k1)),
            k2=float(constants_tbl.get("k2", ModelConstants.k2)),
            k3=float(constants_tbl.get("k3", ModelConstants.k3)),
            g_fa=int(constants_tbl.get("g_fa", ModelConstants.g_fa)),
            g_mul_base=int(constants_tbl.get("g_mul_base", ModelConstants.g_mul_base)),
        )
    except ValueError as exc:
        raise bad("constants", str(exc)) from exc

    ratios = raw.get("ratios", {})
    cgate_ratio = float(ratios.get("cgate", CGATE_OVER_CINV))
    cwl_ratio = float(ratios.get("cwl", CWL_OVER_CINV))
    cbl_ratio = float(ratios.get("cbl", CBL_OVER_CINV))
    v_nominal = float(raw.get("v_nominal", 0.8))

    fit = None
    if "cinv_fit" in raw:
        tbl = raw["cinv_fit"]
        for key in ("slope", "intercept", "node_min", "node_max"):
            if key not in tbl:
                raise bad(f"cinv_fit.{key}", "missing")
        fit = LinearFit(slope=float(tbl["slope"]), intercept=float(tbl["intercept"]),
                        residuals=(), mean_abs_mismatch=float(tbl.get("mean_abs_mismatch", 0.0)),
                        node_min=float(tbl["node_min"]), node_max=float(tbl["node_max"]))

    profile = None
    if "profile" in raw:
        tbl = raw["profile"]
        for key in ("node", "c_inv"):
            if key not in tbl:
                raise bad(f"profile.{key}", "missing")
        try:
            profile = TechnologyProfile(node=float(tbl["node"]), c_inv=float(tbl["c_inv"]),
                                        v_nominal=float(tbl.get("v_nominal", v_nominal)),
                                        cgate_ratio=cgate_ratio, cwl_ratio=cwl_ratio,
                                        cbl_ratio=cbl_ratio)
        except ValueError as exc:
            raise bad("profile", str(exc)) from exc

    if fit is None and profile is None:
        raise InputError(f"{path}: must define a [cinv_fit] or a [profile] section")
    return TechConfig(constants=constants, cinv_fit=fit, profile=profile,
                      cgate_ratio=cgate_ratio, cwl_ratio=cwl_ratio, cbl_ratio=cbl_ratio,
                      v_nominal=v_nominal)


def save_tech_config(path: str | Path, constants: ModelConstants, fit: LinearFit,
                     *, v_nominal: float = 0.8,
                     cgate_ratio: float = CGATE_OVER_CINV,
                     cwl_ratio: float = CWL_OVER_CINV,
                     cbl_ratio: float = CBL_OVER_CINV,
                     header: str = "") -> None:
    """Write a tech.toml with the fitted line and constants (SI units)."""
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    lines += [
        "version = 1",
        f"v_nominal = {v_nominal!r}",
        "",
        "[constants]",
        f"k1 = {constants.k1!r}",
        f"k2 = {constants.k2!r}",
        f"k3 = {constants.k3!r}",
        f"g_fa = {constants.g_fa}",
        f"g_mul_base = {constants.g_mul_base}",
        "",
        "[ratios]",
        f"cgate = {cgate_ratio!r}",
        f"cwl = {cwl_ratio!r}",
        f"cbl = {cbl_ratio!r}",
        "",
        "[cinv_fit]",
        f"slope = {fit.slope!r}",
        f"intercept = {fit.intercept!r}",
        f"node_min = {fit.node_min!r}",
        f"node_max = {fit.node_max!r}",
        f"mean_abs_mismatch = {fit.mean_abs_mismatch!r}",
        "",
    ]
    Path(path).write_text("\n".join(lines))
