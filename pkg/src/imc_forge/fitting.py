"""Extraction of technology constants from published macro datapoints.

The inverter capacitance per node comes from digital designs: for each one we
solve the capacitance that makes the modeled peak energy/op reproduce the
reported value exactly, then regress those capacitances against the node.
The DAC constant k3 is subsequently chosen to minimize the mean absolute
relative mismatch over the analog designs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from . import cost_model
from .errors import InsufficientDataError
from .tech import (AIMC, DIMC, CGATE_OVER_CINV, CBL_OVER_CINV, CWL_OVER_CINV,
                   CINV_FLOOR, FitDatapoint, LinearFit, ModelConstants,
                   TechnologyProfile)

logger = logging.getLogger(__name__)

# Bisection bracket for the per-design capacitance solve.  Peak energy is
# strictly increasing in c_inv, so any bracketed root is unique.
CINV_BRACKET = (1e-18, 1e-12)
# Relative tolerance of the solve.  Tighter than strictly needed so that the
# downstream regression reproduces noise-free synthetic lines to < 1e-9.
CINV_SOLVE_RTOL = 1e-12

# Placeholder clock for peak evaluation of datapoints; energy/op does not
# depend on it.
_FIT_FCLK = 1e9


def spec_for_datapoint(point: FitDatapoint) -> cost_model.MacroSpec:
    return cost_model.MacroSpec(
        paradigm=point.paradigm,
        rows=point.rows,
        cols=point.cols,
        row_mux=point.row_mux,
        weight_bits=point.b_w,
        input_bits=point.b_i,
        adc_res=point.adc_res,
        dac_res=point.dac_res,
        vdd=point.v,
        f_clk=_FIT_FCLK,
        macros=point.macros,
        adc_share=point.adc_share,
    )


def modeled_energy_per_op(point: FitDatapoint, c_inv: float,
                          constants: ModelConstants,
                          *,
                          cgate_ratio: float = CGATE_OVER_CINV,
                          cwl_ratio: float = CWL_OVER_CINV,
                          cbl_ratio: float = CBL_OVER_CINV) -> float:
    """Peak-tile energy per op (J) of a datapoint's macro at a candidate c_inv."""
    tech = TechnologyProfile(node=point.node, c_inv=c_inv, v_nominal=point.v,
                             cgate_ratio=cgate_ratio, cwl_ratio=cwl_ratio,
                             cbl_ratio=cbl_ratio)
    spec = spec_for_datapoint(point)
    peak = cost_model.peak_performance(spec, tech, constants)
    macs = cost_model.peak_cycle_counts(spec).total_macs
    return peak.breakdown.e_total / (cost_model.OPS_PER_MAC * macs)


def _solve_cinv(point: FitDatapoint, constants: ModelConstants,
                rtol: float = CINV_SOLVE_RTOL) -> float | None:
    """Bisection for the c_inv that reproduces the reported energy/op.

    Returns None when the target is not bracketed (non-physical datapoint).
    """
    target = point.energy_per_op
    lo, hi = CINV_BRACKET

    def objective(c: float) -> float:
        return modeled_energy_per_op(point, c, constants) - target

    f_lo, f_hi = objective(lo), objective(hi)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or f_lo * f_hi > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = objective(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo <= rtol * max(abs(lo), abs(hi)):
            break
    # Energy is affine in c_inv, so one secant step lands on the root to
    # machine precision.
    e_lo = modeled_energy_per_op(point, lo, constants)
    e_hi = modeled_energy_per_op(point, hi, constants)
    if e_hi == e_lo:
        return 0.5 * (lo + hi)
    root = lo + (target - e_lo) * (hi - lo) / (e_hi - e_lo)
    return root if math.isfinite(root) and root > 0 else 0.5 * (lo + hi)


def fit_cinv(datapoints: list[FitDatapoint], constants: ModelConstants) -> LinearFit:
    """Regress per-design solved capacitances against the technology node.

    Uses the digital (DIMC) datapoints; requires at least two with distinct
    nodes.  Points whose solve fails are excluded with a warning.  Results are
    independent of input ordering.
    """
    dimc_points = [p for p in datapoints if p.paradigm == DIMC]
    solved: list[tuple[FitDatapoint, float]] = []
    for point in sorted(dimc_points, key=lambda p: (p.node, p.name)):
        c_inv = _solve_cinv(point, constants)
        if c_inv is None or not math.isfinite(c_inv) or c_inv <= 0:
            logger.warning("datapoint %s: capacitance solve failed; excluded from fit", point.name)
            continue
        solved.append((point, c_inv))

    nodes = sorted({p.node for p, _ in solved})
    if len(solved) < 2 or len(nodes) < 2:
        raise InsufficientDataError(
            f"need >= 2 usable DIMC datapoints with distinct nodes, have {len(solved)} "
            f"across {len(nodes)} node(s)")

    xs = np.array([p.node for p, _ in solved], dtype=float)
    ys = np.array([c for _, c in solved], dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)

    residuals = []
    for point, _ in solved:
        c_line = max(slope * point.node + intercept, CINV_FLOOR)
        modeled = modeled_energy_per_op(point, c_line, constants)
        residuals.append(modeled / point.energy_per_op - 1.0)
    residuals_t = tuple(residuals)
    return LinearFit(
        slope=float(slope),
        intercept=float(intercept),
        residuals=residuals_t,
        mean_abs_mismatch=float(np.mean(np.abs(residuals_t))),
        node_min=float(xs.min()),
        node_max=float(xs.max()),
        point_names=tuple(p.name for p, _ in solved),
        solved_cinv=tuple(float(c) for _, c in solved),
    )


def _aimc_energy_decomposition(point: FitDatapoint, cinv_fit: LinearFit,
                               constants: ModelConstants) -> tuple[float, float]:
    """Split a datapoint's modeled energy/op into (k3-independent, per-k3 slope).

    E(k3) is affine, so two probes recover it; probing at the physical fJ
    scale keeps the subtraction well conditioned.
    """
    c_inv = cinv_fit.cinv_at(point.node)
    k3_a, k3_b = 0.5 * constants.k3, 1.5 * constants.k3
    e_a = modeled_energy_per_op(point, c_inv, replace(constants, k3=k3_a))
    e_b = modeled_energy_per_op(point, c_inv, replace(constants, k3=k3_b))
    slope = (e_b - e_a) / (k3_b - k3_a)
    offset = e_a - slope * k3_a
    return offset, slope


def fit_dac_constant(datapoints: list[FitDatapoint], constants: ModelConstants,
                     cinv_fit: LinearFit) -> tuple[float, float]:
    """Pick the k3 (J per DAC conversion step) minimizing mean |relative mismatch|.

    The objective is piecewise linear and convex in k3, so the minimum sits at
    one of the per-point exact-match kinks; those are evaluated directly.
    Returns (k3, mean_abs_mismatch).
    """
    aimc_points = sorted((p for p in datapoints if p.paradigm == AIMC and p.dac_res > 0),
                         key=lambda p: (p.node, p.name))
    if not aimc_points:
        raise InsufficientDataError("need >= 1 AIMC datapoint with DAC_res > 0")

    terms = []  # (reported energy/op, offset, slope) per point
    for point in aimc_points:
        offset, slope = _aimc_energy_decomposition(point, cinv_fit, constants)
        terms.append((point.energy_per_op, offset, slope))

    def mismatch(k3: float) -> float:
        return sum(abs((offset + slope * k3) / reported - 1.0)
                   for reported, offset, slope in terms) / len(terms)

    candidates = []
    for reported, offset, slope in terms:
        if slope > 0:
            kink = (reported - offset) / slope
            if kink > 0:
                candidates.append(kink)
    if not candidates:
        raise InsufficientDataError("no AIMC datapoint constrains the DAC constant")
    best_k3 = min(candidates, key=lambda k: (mismatch(k), k))
    return best_k3, mismatch(best_k3)
