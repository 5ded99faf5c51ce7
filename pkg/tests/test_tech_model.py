"""Technology constants, datapoint schema, and the fitting procedures."""

import random

import pytest

from imc_forge import (FitDatapoint, InsufficientDataError, LinearFit, ModelConstants,
                       TechnologyProfile, load_datapoints, profile_for)
from imc_forge.fitting import (_solve_cinv, fit_cinv, fit_dac_constant,
                               modeled_energy_per_op)
from imc_forge.tech import load_tech_config, save_tech_config


def make_dimc_point(name: str, node: float, efficiency: float, *, v=0.8,
                    rows=256, cols=256, row_mux=4) -> FitDatapoint:
    return FitDatapoint(name=name, paradigm="DIMC", node=node, rows=rows, cols=cols,
                        macros=1, v=v, b_i=4, b_w=4, adc_res=0, dac_res=0,
                        reported_efficiency=efficiency, row_mux=row_mux)


def make_aimc_point(name: str, node: float, efficiency: float, *, v=0.8,
                    rows=256, cols=256, adc_res=5, dac_res=4, adc_share=1) -> FitDatapoint:
    return FitDatapoint(name=name, paradigm="AIMC", node=node, rows=rows, cols=cols,
                        macros=1, v=v, b_i=4, b_w=4, adc_res=adc_res, dac_res=dac_res,
                        reported_efficiency=efficiency, adc_share=adc_share)


def synthesize_dimc_from_line(nodes, slope, intercept, constants) -> list[FitDatapoint]:
    """Noise-free datapoints whose peak energy matches c_inv(node) = slope*node + b."""
    points = []
    for i, node in enumerate(nodes):
        c_inv = slope * node + intercept
        probe = make_dimc_point(f"synth{i}", node, 1.0)
        energy = modeled_energy_per_op(probe, c_inv, constants)
        points.append(make_dimc_point(f"synth{i}", node, 1.0 / (energy * 1e12)))
    return points


class TestTechnologyProfile:
    def test_derived_capacitances(self):
        prof = TechnologyProfile(node=28, c_inv=1e-15, v_nominal=0.8)
        assert prof.c_gate == 2e-15
        assert prof.c_wl == 1e-15
        assert prof.c_bl == 1e-15

    def test_ratio_override(self):
        prof = TechnologyProfile(node=28, c_inv=1e-15, v_nominal=0.8, cbl_ratio=1.5)
        assert prof.c_bl == pytest.approx(1.5e-15)

    @pytest.mark.parametrize("field,value", [("node", 0), ("c_inv", -1e-15), ("v_nominal", 0)])
    def test_rejects_nonpositive(self, field, value):
        kwargs = dict(node=28, c_inv=1e-15, v_nominal=0.8)
        kwargs[field] = value
        with pytest.raises(ValueError):
            TechnologyProfile(**kwargs)


class TestModelConstants:
    def test_defaults(self, constants):
        assert constants.k1 == pytest.approx(100e-15)
        assert constants.k2 == pytest.approx(1e-18)
        assert constants.k3 == pytest.approx(44e-15)
        assert constants.g_fa == 5
        assert constants.g_mul_base == 1

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ModelConstants(k1=0)


class TestFitDatapoint:
    def test_dimc_requires_zero_resolutions(self):
        with pytest.raises(ValueError):
            FitDatapoint(name="x", paradigm="DIMC", node=22, rows=64, cols=64, macros=1,
                         v=0.8, b_i=4, b_w=4, adc_res=4, dac_res=0,
                         reported_efficiency=10.0)

    def test_energy_per_op_from_efficiency(self):
        point = make_dimc_point("x", 22, 100.0)
        assert point.energy_per_op == pytest.approx(1e-14)

    def test_explicit_energy_wins(self):
        point = FitDatapoint(name="x", paradigm="DIMC", node=22, rows=64, cols=64,
                             macros=1, v=0.8, b_i=4, b_w=4, adc_res=0, dac_res=0,
                             reported_efficiency=100.0, reported_energy_per_op=3e-15)
        assert point.energy_per_op == 3e-15


class TestCinvSolve:
    def test_solved_capacitance_positive_and_monotone(self, constants):
        point = make_dimc_point("x", 22, 89.0, v=0.72)
        solved = _solve_cinv(point, constants)
        assert solved is not None and solved > 0
        # the solver's objective (peak energy/op) is strictly monotone in c_inv
        samples = [modeled_energy_per_op(point, c, constants)
                   for c in (1e-17, 1e-16, 5e-16, 1e-15, 5e-15)]
        assert all(a < b for a, b in zip(samples, samples[1:]))

    def test_solution_reproduces_reported_energy(self, constants):
        point = make_dimc_point("x", 12, 121.0)
        solved = _solve_cinv(point, constants)
        assert modeled_energy_per_op(point, solved, constants) == pytest.approx(
            point.energy_per_op, rel=1e-9)


class TestFitCinv:
    def test_recovers_synthetic_line_exactly(self, constants):
        slope, intercept = 2.5e-17, 3.1e-16
        points = synthesize_dimc_from_line([5, 12, 22, 28], slope, intercept, constants)
        fit = fit_cinv(points, constants)
        assert fit.slope == pytest.approx(slope, rel=1e-9)
        assert fit.intercept == pytest.approx(intercept, rel=1e-9)
        assert fit.mean_abs_mismatch < 1e-9
        assert len(fit.residuals) == len(points)

    def test_two_points_suffice(self, constants):
        points = synthesize_dimc_from_line([7, 28], 2e-17, 4e-16, constants)
        fit = fit_cinv(points, constants)
        assert fit.slope == pytest.approx(2e-17, rel=1e-9)

    def test_order_independence(self, constants):
        points = synthesize_dimc_from_line([5, 12, 22, 28], 2.5e-17, 3.1e-16, constants)
        fit_a = fit_cinv(points, constants)
        rng = random.Random(7)
        for _ in range(5):
            shuffled = points[:]
            rng.shuffle(shuffled)
            fit_b = fit_cinv(shuffled, constants)
            assert fit_b.slope == fit_a.slope
            assert fit_b.intercept == fit_a.intercept

    def test_single_point_insufficient(self, constants):
        with pytest.raises(InsufficientDataError):
            fit_cinv([make_dimc_point("only", 22, 89.0)], constants)

    def test_same_node_points_insufficient(self, constants):
        points = [make_dimc_point("a", 22, 89.0), make_dimc_point("b", 22, 70.0)]
        with pytest.raises(InsufficientDataError):
            fit_cinv(points, constants)

    def test_aimc_points_ignored(self, constants):
        points = synthesize_dimc_from_line([7, 28], 2e-17, 4e-16, constants)
        fit_a = fit_cinv(points, constants)
        fit_b = fit_cinv(points + [make_aimc_point("noise", 16, 500.0)], constants)
        assert fit_a.slope == fit_b.slope

    def test_unsolvable_point_excluded_with_remainder_fit(self, constants):
        points = synthesize_dimc_from_line([7, 22, 28], 2e-17, 4e-16, constants)
        # efficiency so absurdly high that no capacitance in the bracket matches
        bad = make_dimc_point("bogus", 12, 1e9)
        fit = fit_cinv(points + [bad], constants)
        assert "bogus" not in fit.point_names
        assert fit.slope == pytest.approx(2e-17, rel=1e-9)


class TestFitDacConstant:
    def test_recovers_planted_k3(self, constants):
        dimc = synthesize_dimc_from_line([5, 12, 22, 28], 2.5e-17, 3e-16, constants)
        fit = fit_cinv(dimc, constants)
        aimc = []
        for i, (node, adc, rows) in enumerate([(7, 4, 64), (22, 6, 512), (28, 5, 256)]):
            probe = make_aimc_point(f"a{i}", node, 1.0, adc_res=adc, rows=rows)
            energy = modeled_energy_per_op(probe, fit.cinv_at(node), constants)
            aimc.append(make_aimc_point(f"a{i}", node, 1.0 / (energy * 1e12),
                                        adc_res=adc, rows=rows))
        k3, mismatch = fit_dac_constant(aimc, constants, fit)
        assert k3 == pytest.approx(44e-15, rel=1e-6)
        assert mismatch == pytest.approx(0.0, abs=1e-9)

    def test_empty_aimc_list_errors(self, constants):
        dimc = synthesize_dimc_from_line([7, 28], 2e-17, 4e-16, constants)
        fit = fit_cinv(dimc, constants)
        with pytest.raises(InsufficientDataError):
            fit_dac_constant(dimc, constants, fit)  # only DIMC points present

    def test_bundled_corpus_targets(self, data_dir, constants):
        points = load_datapoints(data_dir / "datapoints.json")
        fit = fit_cinv(points, constants)
        # four digital points: three designs plus the near-memory reference
        assert len(fit.point_names) == 4
        assert 0.01 < fit.mean_abs_mismatch < 0.15
        k3, mismatch = fit_dac_constant(points, constants, fit)
        assert 30e-15 < k3 < 60e-15
        assert mismatch < 0.15


class TestProfileFor:
    @pytest.fixture
    def fit(self, constants):
        points = synthesize_dimc_from_line([5, 12, 22, 28], 2.5e-17, 3.1e-16, constants)
        return fit_cinv(points, constants)

    def test_value_at_fitted_node(self, fit):
        prof = profile_for(22, fit)
        assert prof.c_inv == pytest.approx(2.5e-17 * 22 + 3.1e-16, rel=1e-9)
        assert prof.warnings == ()

    def test_midpoint_linearity(self, fit):
        a = profile_for(12, fit).c_inv
        b = profile_for(22, fit).c_inv
        mid = profile_for(17, fit).c_inv
        assert mid == pytest.approx((a + b) / 2, rel=1e-12)

    def test_extrapolation_warns_but_returns(self, fit):
        prof = profile_for(65, fit)
        assert prof.warnings
        assert prof.c_inv == pytest.approx(2.5e-17 * 65 + 3.1e-16, rel=1e-9)

    def test_floor_clamps(self, constants):
        fit = LinearFit(slope=-1e-16, intercept=1e-16, residuals=(), mean_abs_mismatch=0.0,
                        node_min=5, node_max=28)
        prof = profile_for(28, fit)
        assert prof.c_inv > 0


class TestFiles:
    def test_bundled_datapoints_load(self, data_dir):
        points = load_datapoints(data_dir / "datapoints.json")
        assert len(points) == 9
        assert all(p.reported_efficiency > 0 for p in points)
        assert all(p.source for p in points)
        dimc = [p for p in points if p.paradigm == "DIMC"]
        assert all(p.adc_res == 0 and p.dac_res == 0 for p in dimc)

    def test_tech_roundtrip(self, tmp_path, constants):
        fit = LinearFit(slope=2.3e-17, intercept=2.3e-16, residuals=(0.1, -0.05),
                        mean_abs_mismatch=0.075, node_min=5, node_max=28)
        path = tmp_path / "tech.toml"
        save_tech_config(path, constants, fit, header="test profile")
        cfg = load_tech_config(path)
        assert cfg.constants.k3 == pytest.approx(constants.k3)
        assert cfg.cinv_fit.slope == pytest.approx(fit.slope)
        prof = cfg.profile_for_node(28)
        assert prof.c_inv == pytest.approx(2.3e-17 * 28 + 2.3e-16)

    def test_fixed_profile_config(self, tmp_path):
        path = tmp_path / "tech.toml"
        path.write_text("""
[profile]
node = 28.0
c_inv = 9e-16
v_nominal = 0.8
""")
        cfg = load_tech_config(path)
        assert cfg.cinv_fit is None
        assert cfg.profile_for_node(28).c_inv == pytest.approx(9e-16)
