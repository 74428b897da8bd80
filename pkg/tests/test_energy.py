import math

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

import oracle_data as oracle
import strategies

from epsim.energy import (
    affine_total,
    category_breakdown,
    idle_line,
    job_energy,
    member_energy_breakdown,
    power_scatter,
    scatter_csv,
    suite_total,
    wallclock_breakdown,
)
from epsim.errors import DegenerateTotal
from epsim.model import (
    EnergyTerm,
    EnsembleConfig,
    JobCategory,
    MemberPath,
)
from test_model import make_job, make_model


class TestJobEnergy:
    def test_bator(self):
        term = EnergyTerm(per_control_kj=20.7, per_perturbed_kj=11.6)
        assert job_energy(term, EnsembleConfig(2, 22)) == pytest.approx(273.4)

    def test_forecast_exact_coefficient(self):
        # the measurement table writes the per-member factor as half the sum
        # of the two physics variants
        term = EnergyTerm(per_any_kj=0.5 * (4957.4 + 7982.3))
        assert job_energy(term, EnsembleConfig(2, 22)) == pytest.approx(142336.7)

    def test_empty_ensemble_leaves_fixed_term(self):
        term = EnergyTerm(per_control_kj=3.0, per_perturbed_kj=4.0, per_any_kj=5.0, fixed_kj=7.5)
        assert job_energy(term, EnsembleConfig(0, 0)) == 7.5


class TestAffineTotal:
    def test_bundled_coefficients(self, bundled_model):
        A, B, D = affine_total(bundled_model)
        assert A == pytest.approx(oracle.EXPECTED_A, abs=0.1)
        assert B == pytest.approx(oracle.EXPECTED_B, abs=0.1)
        assert D == pytest.approx(oracle.EXPECTED_D, abs=0.01)

    def test_fixed_only_job(self):
        model = make_model([make_job("X", fixed_kj=5.0)])
        assert affine_total(model) == (0.0, 0.0, 5.0)

    def test_eval_at_2_22_matches_rounded_total(self, bundled_model):
        A, B, D = affine_total(bundled_model)
        assert A * 2 + B * 22 + D == pytest.approx(146534.7, rel=1e-9)

    def test_matches_frozen_reference_sums(self, bundled_model):
        assert affine_total(bundled_model) == pytest.approx(oracle.affine_coefficients())


class TestCategoryBreakdown:
    def test_forecast_dominates_at_2_22(self, bundled_model):
        bd = category_breakdown(bundled_model, EnsembleConfig(2, 22))
        assert bd.fractions[JobCategory.FORECAST] == pytest.approx(0.971, abs=0.001)
        assert not bd.forecast_excluded

    def test_against_frozen_sums(self, bundled_model):
        cfg = EnsembleConfig(2, 22)
        bd = category_breakdown(bundled_model, cfg)
        for cat in bd.per_category_kj:
            assert bd.per_category_kj[cat] == pytest.approx(
                oracle.category_energy_at(cat.value, 2, 22)
            )
        assert bd.total_kj == pytest.approx(oracle.total_energy_at(2, 22))

    def test_data_assimilation_share_decreases_with_members(self, bundled_model):
        small = category_breakdown(bundled_model, EnsembleConfig(2, 22), exclude_forecast=True)
        large = category_breakdown(bundled_model, EnsembleConfig(2, 42), exclude_forecast=True)
        assert (
            large.fractions[JobCategory.DATA_ASSIMILATION]
            < small.fractions[JobCategory.DATA_ASSIMILATION]
        )

    def test_single_category_fraction_is_one(self):
        model = make_model([make_job("X", per_any_kj=2.0)])
        bd = category_breakdown(model)
        assert bd.fractions == {JobCategory.OTHER: 1.0}

    def test_exclude_forecast_drops_forecast_from_fractions(self, bundled_model):
        bd = category_breakdown(bundled_model, exclude_forecast=True)
        assert JobCategory.FORECAST not in bd.fractions
        assert JobCategory.FORECAST in bd.per_category_kj
        assert bd.forecast_excluded

    def test_degenerate_total(self):
        model = make_model([make_job("F", category=JobCategory.FORECAST, per_any_kj=1.0)])
        with pytest.raises(DegenerateTotal):
            category_breakdown(model, exclude_forecast=True)

    def test_contaminated_exclusion_option(self, bundled_model):
        full = category_breakdown(bundled_model)
        trimmed = category_breakdown(bundled_model, include_contaminated=False)
        contaminated = {j.name for j in bundled_model.jobs if j.contaminated}
        assert set(full.per_job_kj) - set(trimmed.per_job_kj) == contaminated
        assert trimmed.total_kj < full.total_kj


class TestWallclockBreakdown:
    def test_control_path_forecast_fraction(self, bundled_model):
        wc = wallclock_breakdown(bundled_model, MemberPath.CONTROL)
        assert wc.total_s == pytest.approx(oracle.EXPECTED_CTRL_PATH_S)
        assert wc.fractions[JobCategory.FORECAST] == pytest.approx(0.365, abs=0.01)

    def test_perturbed_path_forecast_fraction(self, bundled_model):
        wc = wallclock_breakdown(bundled_model, MemberPath.PERTURBED)
        assert wc.total_s == pytest.approx(oracle.EXPECTED_PERT_PATH_S)
        assert wc.fractions[JobCategory.FORECAST] == pytest.approx(0.511, abs=0.01)

    def test_forecast_only_model(self):
        model = make_model([make_job("F", category=JobCategory.FORECAST)])
        wc = wallclock_breakdown(model, MemberPath.CONTROL)
        assert wc.fractions == {JobCategory.FORECAST: 1.0}


class TestMemberEnergyShares:
    def test_member_level_forecast_shares(self, bundled_model):
        _, ctrl = member_energy_breakdown(bundled_model, MemberPath.CONTROL)
        _, pert = member_energy_breakdown(bundled_model, MemberPath.PERTURBED)
        assert ctrl[JobCategory.FORECAST] == pytest.approx(0.942, abs=0.001)
        assert pert[JobCategory.FORECAST] == pytest.approx(0.974, abs=0.001)


class TestPowerScatter:
    def test_forecast_point_near_five_kw(self, bundled_model):
        points = {
            (p.job, p.role): p for p in power_scatter(bundled_model, EnsembleConfig(2, 22))
        }
        fc = points[("Forecast", MemberPath.CONTROL)]
        assert fc.power_kw == pytest.approx(5.02, abs=0.05)

    def test_simple_ratio(self):
        model = make_model([make_job("X", wc_ctrl=10.0, wc_pert=10.0, per_any_kj=10.0)], n=1, N=1)
        (point,) = [p for p in power_scatter(model) if p.role is MemberPath.CONTROL]
        assert point.power_kw == pytest.approx(1.0)

    def test_zero_wallclock_skipped(self):
        model = make_model([make_job("X", wc_ctrl=0.0, wc_pert=0.0, per_any_kj=1.0)])
        assert power_scatter(model) == []

    def test_repeated_job_uses_per_instance_values(self, bundled_model):
        points = {(p.job, p.role): p for p in power_scatter(bundled_model)}
        gl = points[("gl_bd", MemberPath.CONTROL)]
        assert gl.wallclock_s == pytest.approx(66.5)
        assert gl.energy_kj == pytest.approx(98.5 / 13)

    def test_idle_line_energy_is_power_times_duration(self, bundled_model):
        samples = dict(idle_line(bundled_model.cluster, (60.0,)))
        assert samples[60.0] == pytest.approx(bundled_model.cluster.idle_power_kw * 60.0)

    def test_scatter_csv_header_and_reference_lines(self, bundled_model):
        text = scatter_csv(bundled_model)
        lines = text.splitlines()
        assert lines[0] == "job,role,wallclock_s,energy_kj,power_kw"
        assert any(line.startswith("_idle_node,") for line in lines)
        assert any(line.startswith("_iso_1kw,") for line in lines)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=80)
@given(strategies.suite_models(), st.integers(1, 60), st.integers(1, 60))
def test_affine_consistency(model, a, b):
    n, N = min(a, b), max(a, b)
    cfg = EnsembleConfig(n, N)
    A, B, D = affine_total(model)
    direct = suite_total(model, cfg)
    affine = A * n + B * N + D
    assert direct == pytest.approx(affine, rel=1e-6)


@settings(max_examples=80)
@given(strategies.suite_models(), st.integers(1, 40), st.integers(1, 40))
def test_total_monotone_in_members(model, n, extra):
    cfg_small = EnsembleConfig(n, n + extra - 1)
    cfg_large = EnsembleConfig(n, n + extra)
    assert suite_total(model, cfg_large) >= suite_total(model, cfg_small) - 1e-9


def test_total_monotone_in_control_members_for_bundled(bundled_model):
    # holds whenever every a >= b, which is true for the bundled dataset
    totals = [suite_total(bundled_model, EnsembleConfig(n, 22)) for n in range(1, 23)]
    assert all(t2 >= t1 for t1, t2 in zip(totals, totals[1:]))


@settings(max_examples=60)
@given(strategies.suite_models())
def test_total_is_order_independent(model):
    import dataclasses

    reversed_model = dataclasses.replace(model, jobs=tuple(reversed(model.jobs)))
    assert suite_total(model) == pytest.approx(suite_total(reversed_model), rel=1e-12)


@settings(max_examples=60)
@given(strategies.suite_models(), st.booleans())
def test_fractions_sum_to_one(model, exclude_forecast):
    try:
        bd = category_breakdown(model, exclude_forecast=exclude_forecast)
    except DegenerateTotal:
        return
    assert math.fsum(bd.fractions.values()) == pytest.approx(1.0, abs=1e-9)
