"""Bisection-with-perturbation kernel: measure, drift, overlap construction."""

import io
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from staircase.designs import MarkovLanglie, SimSeed, simulate_path
from staircase.langlie import (
    IntervalUnion,
    LanglieKernel,
    drift_check,
    interval_union,
    invariant_measure,
    kernel_density,
    make_kernel,
    occupation_histogram,
    transition_matrix,
)
from staircase.models import Link, ModelSpec

# High-precision link values frozen for this module:
PHI_HALF = 0.6914624612740131
PHI_1 = 0.8413447460685429
# H1 / (2 (H1 - 1/2)) at H1 = Phi(1)
EPS_MAX_PROBIT = 1.232397386745772
# 1 / (H1/2 - 0.1 (H1 - 1/2))
M_MIN_PROBIT_01 = 2.5870684454703650
# 10 (0.1 (H1 - 1/2) - H1/2) + 1
DRIFT_AT_1_M10 = -2.8653789842741718

PROBIT_01 = ModelSpec(Link.PROBIT, 0.0, 1.0)


def canonical_kernel(eps=0.1, model=PROBIT_01, grid_m=200):
    return make_kernel(MarkovLanglie(a=0.0, b=1.0, eps=eps), model,
                       grid_m=grid_m)


class TestMakeKernel:
    def test_normalizes_bounds_eps_and_model(self):
        kernel = make_kernel(MarkovLanglie(a=-1.0, b=1.0, eps=0.2),
                             PROBIT_01, grid_m=50)
        assert kernel.a == 0.0 and kernel.b == 1.0
        assert kernel.eps == pytest.approx(0.1, rel=1e-15)
        assert kernel.model.link is Link.PROBIT
        assert kernel.model.alpha == pytest.approx(-1.0)
        assert kernel.model.beta == pytest.approx(2.0)
        assert kernel.grid_m == 50

    def test_canonical_bounds_pass_through(self):
        kernel = canonical_kernel()
        assert kernel.eps == 0.1
        assert kernel.model == PROBIT_01

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            canonical_kernel(grid_m=9)
        with pytest.raises(ValueError):
            LanglieKernel(a=0.0, b=1.0, eps=0.6, model=PROBIT_01, grid_m=100)
        with pytest.raises(ValueError):
            LanglieKernel(a=0.0, b=0.9, eps=0.1, model=PROBIT_01, grid_m=100)


class TestKernelDensity:
    def test_frozen_low_interval_value(self):
        kernel = canonical_kernel()
        got = kernel_density(kernel, 0.5, 0.3)
        assert got == pytest.approx(PHI_HALF / 0.1, rel=1e-12)

    def test_gap_between_intervals_is_zero(self):
        kernel = canonical_kernel()
        assert kernel_density(kernel, 0.5, 0.5) == 0.0

    def test_high_interval_value(self):
        kernel = canonical_kernel()
        got = kernel_density(kernel, 0.5, 0.7)
        assert got == pytest.approx((1.0 - PHI_HALF) / 0.1, rel=1e-12)

    def test_closed_interval_endpoints(self):
        kernel = canonical_kernel()
        assert kernel_density(kernel, 0.5, 0.25) > 0.0
        assert kernel_density(kernel, 0.5, 0.35) > 0.0
        assert kernel_density(kernel, 0.5, 0.65) > 0.0
        assert kernel_density(kernel, 0.5, 0.75) > 0.0
        assert kernel_density(kernel, 0.5, 0.24) == 0.0
        assert kernel_density(kernel, 0.5, 0.76) == 0.0

    @pytest.mark.parametrize("x", [0.0, 0.37, 0.5, 1.0])
    def test_density_integrates_to_one(self, x):
        kernel = canonical_kernel()
        breaks = sorted({x / 2, x / 2 + 0.1, (x + 1) / 2 - 0.1, (x + 1) / 2})
        total, _ = quad(lambda xp: kernel_density(kernel, x, xp), 0.0, 1.0,
                        points=breaks, limit=200)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_domain_errors(self):
        kernel = canonical_kernel()
        with pytest.raises(ValueError):
            kernel_density(kernel, -0.1, 0.5)
        with pytest.raises(ValueError):
            kernel_density(kernel, 0.5, 1.2)


class TestTransitionMatrix:
    def test_rows_sum_to_one(self):
        for model in (PROBIT_01, ModelSpec(Link.LOGIT, -1.0, 2.0)):
            P = transition_matrix(canonical_kernel(model=model, grid_m=128))
            assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-12

    def test_row_mass_splits_by_outcome_probability(self):
        import scipy.special as sp

        kernel = canonical_kernel(grid_m=100)
        P = transition_matrix(kernel)
        i = 50
        x = (i + 0.5) / 100
        big = float(sp.ndtr(x))
        # cells fully below the gap between the two support intervals
        low = int(math.floor((x / 2 + 0.1) * 100)) + 1
        assert P[i, :low].sum() == pytest.approx(big, abs=1e-12)

    def test_nonnegative(self):
        P = transition_matrix(canonical_kernel(grid_m=64))
        assert P.min() >= 0.0


class TestInvariantMeasure:
    def test_solve_residual_and_mass(self):
        measure = invariant_measure(canonical_kernel(grid_m=200))
        pi = np.asarray(measure.pi)
        assert measure.residual < 1e-10
        assert pi.min() >= 0.0
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(measure.pi) == 200

    def test_matches_long_run_occupation(self):
        # normalized from (a,b)=(-1,1) so the median sits at 0.5
        rule = MarkovLanglie(a=-1.0, b=1.0, eps=0.2)
        kernel = make_kernel(rule, PROBIT_01, grid_m=1000)
        assert kernel.eps == pytest.approx(0.1, rel=1e-15)
        measure = invariant_measure(kernel)

        norm_rule = MarkovLanglie(a=0.0, b=1.0, eps=kernel.eps)
        path = simulate_path(norm_rule, kernel.model, 1_000_000,
                             SimSeed(9301, 0))
        hist = occupation_histogram(path.xs, 1000)
        tv = 0.5 * np.abs(np.asarray(measure.pi) - hist).sum()
        assert tv < 0.02

    def test_support_inside_reachable_hull(self):
        kernel = canonical_kernel(grid_m=200)
        measure = invariant_measure(kernel)
        # one-step images [0, 1/2+eps] and [1/2-eps, 1] already cover [0,1],
        # so the reachable hull is the whole interval and the bound is loose
        lo, hi = measure.reachable
        assert lo == 0.0 and hi == 1.0
        mids = np.asarray(measure.midpoints)
        support = mids[np.asarray(measure.pi) > 1e-12]
        assert support.min() >= lo and support.max() <= hi

    def test_rejects_too_coarse_grid(self):
        # 20 cells genuinely fail the doubling acceptance for eps=0.1
        with pytest.raises(ValueError, match="doubling"):
            invariant_measure(canonical_kernel(grid_m=20))

    def test_csv_output(self):
        measure = invariant_measure(canonical_kernel(grid_m=100))
        buf = io.StringIO()
        measure.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "cell_midpoint,mass"
        assert len(lines) == 101
        mid, mass = lines[1].split(",")
        assert float(mid) == pytest.approx(0.005)
        assert float(mass) == measure.pi[0]

    def test_json_round_trip(self):
        measure = invariant_measure(canonical_kernel(grid_m=100))
        blob = json.loads(measure.to_json())
        assert blob["grid_m"] == 100
        assert blob["residual"] == measure.residual
        assert blob["tv_doubling"] < 1e-3
        assert len(blob["pi"]) == 100


class TestDriftCheck:
    def test_frozen_eps_max_and_h1(self):
        report = drift_check(canonical_kernel())
        assert report.ok
        assert report.h1 == pytest.approx(PHI_1, rel=1e-12)
        assert report.eps_max == pytest.approx(EPS_MAX_PROBIT, rel=1e-12)

    def test_frozen_drift_at_one_with_m10(self):
        report = drift_check(canonical_kernel(), m=10.0)
        assert report.m == 10.0
        assert report.drift_at_1 == pytest.approx(DRIFT_AT_1_M10, rel=1e-12)

    def test_default_m_doubles_the_minimum(self):
        report = drift_check(canonical_kernel())
        assert report.m_min == pytest.approx(M_MIN_PROBIT_01, rel=1e-12)
        assert report.m == pytest.approx(2 * report.m_min, rel=1e-15)
        # -m/m_min + 1 at the default m
        assert report.drift_at_1 == pytest.approx(-1.0, rel=1e-12)

    def test_binding_constraint_is_one_half(self):
        # eps_max = H1/(2 H1 - 1) >= 1 for every H1 in (1/2, 1], so the
        # kernel bound eps < 1/2 always binds first
        report = drift_check(canonical_kernel())
        assert report.eps_max > 0.5
        assert report.binding == "one_half"
        assert report.eps_ok

    def test_scan_matches_closed_form_at_x1(self):
        report = drift_check(canonical_kernel(), m=7.0)
        assert report.scan_drift_at_1 == pytest.approx(report.drift_at_1,
                                                       rel=1e-12, abs=1e-12)

    def test_eta_threshold(self):
        import scipy.special as sp

        report = drift_check(canonical_kernel(), m=10.0)
        assert 0.0 < report.eta < 1.0
        assert report.passed
        # independent recomputation on the same scan lattice
        xs = np.arange(0.0, 1.0 + 1e-4 / 2, 1e-4)
        big = sp.ndtr(xs)
        drift = 10.0 * (-xs / 2 + (1 - big) / 2 + 0.1 * (big - 0.5)) + 1.0
        want = float(xs[drift >= 0.0].max())
        assert report.eta == pytest.approx(want, abs=1e-12)

    def test_median_not_covered_reports_violation(self):
        kernel = canonical_kernel(model=ModelSpec(Link.PROBIT, 0.0, -1.0))
        report = drift_check(kernel)
        assert not report.ok
        assert not report.passed
        assert report.reason == "median_not_covered"
        assert report.eps_max is None

    def test_json(self):
        report = drift_check(canonical_kernel(), m=10.0)
        blob = json.loads(report.to_json())
        assert blob["h1"] == report.h1
        assert blob["binding"] == "one_half"
        assert blob["passed"] is True


class TestIntervalUnion:
    def test_generation_two_exact(self):
        union = interval_union(2, 0.1)
        assert len(union.intervals) == 2
        (a1, b1), (a2, b2) = union.intervals
        assert a1 == pytest.approx(0.25, abs=1e-15)
        assert b1 == pytest.approx(0.35, abs=1e-15)
        assert a2 == pytest.approx(0.65, abs=1e-15)
        assert b2 == pytest.approx(0.75, abs=1e-15)
        assert not union.is_full

    def test_generation_one_is_the_start_point(self):
        union = interval_union(1, 0.1)
        assert union.intervals == ((0.5, 0.5),)
        assert union.raw_length == 0.0

    def test_raw_length_formula(self):
        union = interval_union(4, 0.1)
        assert union.raw_length == pytest.approx(0.175, rel=1e-12)
        for i in range(1, 10):
            got = interval_union(i, 0.07).raw_length
            assert got == pytest.approx(2 * (1 - 0.5 ** (i - 1)) * 0.07,
                                        rel=1e-12, abs=1e-15)

    def test_paper_generation_bound(self):
        # sufficient bound: smallest integer above log2(1 + 1/eps) + 1
        n_bound = math.floor(math.log2(1 + 1 / 0.1) + 1) + 1
        assert n_bound == 5
        assert interval_union(n_bound, 0.1).is_full
        first_single = min(
            i for i in range(1, n_bound + 1)
            if len(interval_union(i, 0.1).intervals) == 1 and i > 1)
        assert first_single <= n_bound

    def test_containment_bound(self):
        for i in range(1, 9):
            union = interval_union(i, 0.1)
            lo = 0.5 ** i
            for a, b in union.intervals:
                assert a >= lo - 1e-15
                assert b <= 1 - lo + 1e-15

    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.4])
    def test_overlap_condition_forces_single_interval(self, eps):
        for i in range(2, 13):
            if (1 - 0.5 ** (i - 1)) * eps > 0.5 ** (i - 1):
                union = interval_union(i, eps)
                assert len(union.intervals) == 1, (eps, i)

    def test_intervals_disjoint_after_merge(self):
        for i in range(2, 8):
            union = interval_union(i, 0.05)
            for (_, b1), (a2, _) in zip(union.intervals, union.intervals[1:]):
                assert a2 > b1

    def test_validation(self):
        with pytest.raises(ValueError):
            interval_union(0, 0.1)
        with pytest.raises(ValueError):
            interval_union(3, 0.0)
        with pytest.raises(ValueError):
            interval_union(3, 0.5)

    def test_json_list_form(self):
        union = interval_union(2, 0.1)
        blob = json.loads(union.to_json())
        assert blob["i"] == 2
        assert len(blob["intervals"]) == 2
        assert blob["intervals"][0][0] == union.intervals[0][0]
        assert blob["is_full"] is False

    def test_type_invariants(self):
        with pytest.raises(ValueError):
            IntervalUnion(i=2, intervals=((0.3, 0.2),), raw_length=0.1,
                          is_full=False)
        with pytest.raises(ValueError):
            IntervalUnion(i=2, intervals=((0.1, 0.3), (0.2, 0.4)),
                          raw_length=0.1, is_full=False)


class TestOccupationHistogram:
    def test_masses_sum_to_one(self):
        rule = MarkovLanglie(a=0.0, b=1.0, eps=0.1)
        path = simulate_path(rule, ModelSpec(Link.PROBIT, -1.0, 2.0), 5000,
                             SimSeed(9302, 0))
        hist = occupation_histogram(path.xs, 50)
        assert hist.shape == (50,)
        assert hist.sum() == pytest.approx(1.0, abs=1e-12)
        assert hist.min() >= 0.0
