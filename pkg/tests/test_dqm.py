"""Quadratic-mean remainder evaluation and the summed-remainder trend check."""

import io
import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staircase.designs import Bruceton, MarkovLanglie, RobbinsMonro, SimSeed, simulate_path
from staircase.dqm import DqmReport, d_remainder, sdqm_sum, sdqm_trend
from staircase.models import Link, ModelSpec

# Frozen from a 50-digit evaluation of the naive two-term sum
# (logit theta=(0,1), h=(0.1,0), x=0).
D_LOGIT_SMALL = 9.765283212374591e-08


def naive_d(link, alpha, beta, h, x):
    """Direct extended-precision evaluation of the two-term remainder.

    Deliberately uses the unrearranged formula so it exercises none of the
    cancellation handling in the implementation.
    """
    with mp.workdps(50):
        alpha, beta, x = mp.mpf(alpha), mp.mpf(beta), mp.mpf(x)
        h0, h1 = mp.mpf(h[0]), mp.mpf(h[1])
        eta = alpha + beta * x
        eta2 = (alpha + h0) + (beta + h1) * x
        hz = h0 + h1 * x
        if link is Link.LOGIT:
            big, big2 = 1 / (1 + mp.exp(-eta)), 1 / (1 + mp.exp(-eta2))
            c1, c0 = 1 - big, -big
        else:
            big, big2 = mp.ncdf(eta), mp.ncdf(eta2)
            c1 = mp.npdf(eta) / big
            c0 = -mp.npdf(eta) / (1 - big)
        t1 = mp.sqrt(big2) - mp.sqrt(big) - hz * c1 * mp.sqrt(big) / 2
        t0 = mp.sqrt(1 - big2) - mp.sqrt(1 - big) - hz * c0 * mp.sqrt(1 - big) / 2
        return float(t1 * t1 + t0 * t0)


class TestDRemainder:
    def test_zero_increment_is_exactly_zero(self):
        model = ModelSpec(Link.LOGIT, 0.4, 1.3)
        assert d_remainder(model, (0.0, 0.0), 1.7) == 0.0
        model = ModelSpec(Link.PROBIT, -0.2, 0.8)
        assert d_remainder(model, (0.0, 0.0), -0.6) == 0.0

    def test_frozen_small_increment_value(self):
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        got = d_remainder(model, (0.1, 0.0), 0.0)
        assert got == pytest.approx(D_LOGIT_SMALL, rel=1e-9)

    @pytest.mark.parametrize(
        "link, alpha, beta, h, x",
        [
            (Link.LOGIT, 0.0, 1.0, (1.0, 0.0), 0.0),
            (Link.LOGIT, 0.3, 1.2, (0.8, 0.5), 1.1),
            (Link.LOGIT, -1.0, 0.7, (-0.9, 0.3), -0.4),
            (Link.PROBIT, 0.0, 1.0, (1.0, 0.5), 0.7),
            (Link.PROBIT, -0.2, 0.8, (-1.2, 0.4), -0.3),
            (Link.PROBIT, 0.5, 1.5, (0.6, -0.2), -1.0),
        ],
    )
    def test_matches_extended_precision_naive_form(self, link, alpha, beta, h, x):
        # Increments are chosen with |h^T z| >= 0.5 so the float64 evaluation
        # honestly carries 14 significant digits; see the module docstring.
        model = ModelSpec(link, alpha, beta)
        got = d_remainder(model, h, x)
        want = naive_d(link, alpha, beta, h, x)
        assert got == pytest.approx(want, rel=1e-14)

    def test_scaling_ratios_decrease(self):
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        h = np.array([1.0, 0.5])
        ratios = [d_remainder(model, t * h, 0.3) / t**2 for t in (1e-1, 1e-2, 1e-3)]
        assert ratios[1] < ratios[0]
        assert ratios[2] < ratios[1]

    def test_scaling_ratios_decrease_probit(self):
        model = ModelSpec(Link.PROBIT, 0.2, 0.9)
        h = np.array([0.7, -0.4])
        ratios = [d_remainder(model, t * h, -0.8) / t**2 for t in (1e-1, 1e-2, 1e-3)]
        assert ratios[1] < ratios[0]
        assert ratios[2] < ratios[1]

    @given(
        link=st.sampled_from([Link.LOGIT, Link.PROBIT]),
        alpha=st.floats(-3, 3),
        beta=st.floats(-3, 3),
        h0=st.floats(-2, 2),
        h1=st.floats(-2, 2),
        x=st.floats(-5, 5),
    )
    @settings(max_examples=200, deadline=None)
    def test_nonnegative_and_finite(self, link, alpha, beta, h0, h1, x):
        val = d_remainder(ModelSpec(link, alpha, beta), (h0, h1), x)
        assert math.isfinite(val)
        assert val >= 0.0

    def test_finite_in_clamped_tails(self):
        for link in (Link.LOGIT, Link.PROBIT):
            model = ModelSpec(link, 0.0, 1.0)
            for x in (-500.0, 500.0):
                val = d_remainder(model, (1.0, 0.0), x)
                assert math.isfinite(val) and val >= 0.0

    def test_logit_reflection_symmetry(self):
        # theta=(0,beta): negating x and the intercept increment swaps the
        # two outcome terms, so the sum is unchanged.
        model = ModelSpec(Link.LOGIT, 0.0, 1.3)
        for x in (0.0, 0.7, -1.9, 3.3):
            left = d_remainder(model, (0.4, 0.0), x)
            right = d_remainder(model, (-0.4, 0.0), -x)
            assert left == pytest.approx(right, rel=1e-12)

    def test_rejects_nonfinite_increment(self):
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        with pytest.raises(ValueError):
            d_remainder(model, (math.nan, 0.0), 0.0)
        with pytest.raises(ValueError):
            d_remainder(model, (0.0, math.inf), 0.0)


class TestSdqmSum:
    def test_single_point_zero_increment(self):
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        assert sdqm_sum([2.5], model, (0.0, 0.0)) == 0.0

    def test_iid_point_consistency_power_of_two(self):
        # Pairwise summation of 8 equal terms is exact, so this holds bitwise.
        model = ModelSpec(Link.PROBIT, 0.1, 1.1)
        h = (0.9, 0.4)
        x0 = 0.6
        total = sdqm_sum([x0] * 8, model, h)
        hn = (h[0] / math.sqrt(8), h[1] / math.sqrt(8))
        assert total == 8 * d_remainder(model, hn, x0)

    def test_iid_point_consistency_general(self):
        model = ModelSpec(Link.LOGIT, -0.3, 0.9)
        h = (1.0, 1.0)
        x0 = -0.2
        total = sdqm_sum([x0] * 10, model, h)
        hn = (h[0] / math.sqrt(10), h[1] / math.sqrt(10))
        assert total == pytest.approx(10 * d_remainder(model, hn, x0), rel=1e-15)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sdqm_sum([], ModelSpec(Link.LOGIT, 0.0, 1.0), (1.0, 0.0))

    def test_staircase_sum_decays(self):
        # Median over a few replications; the expected ratio is near
        # n_small/n_large = 0.01, well inside the 0.05 bound.
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        rule = Bruceton(x1=0.0, d=1.0)
        h = (1.0, 1.0)
        ratios = []
        for rep in range(5):
            path = simulate_path(rule, model, 10_000, SimSeed(6101, rep))
            small = sdqm_sum(path.xs[:100], model, h)
            large = sdqm_sum(path.xs, model, h)
            ratios.append(large / small)
        assert float(np.median(ratios)) <= 0.05


class TestSdqmTrend:
    def test_bruceton_trend_passes(self):
        report = sdqm_trend(
            Bruceton(x1=0.0, d=1.0),
            ModelSpec(Link.LOGIT, 0.0, 1.0),
            (1.0, 1.0),
            (100, 1000, 10_000),
            reps=50,
            seed=7001,
        )
        assert report.passed
        assert report.sums[-1] < report.sums[0]

    def test_langlie_trend_passes(self):
        # theta=(0,1) puts the median exactly on the lower bound, so the
        # strict containment check warns; the trend still decays.
        with pytest.warns(RuntimeWarning):
            report = sdqm_trend(
                MarkovLanglie(a=0.0, b=1.0, eps=0.1),
                ModelSpec(Link.LOGIT, 0.0, 1.0),
                (1.0, 1.0),
                (100, 1000, 10_000),
                reps=50,
                seed=7002,
            )
        assert report.passed

    def test_robbins_monro_trend_passes(self):
        report = sdqm_trend(
            RobbinsMonro(x1=1.0, c=4.0, q=0.5),
            ModelSpec(Link.LOGIT, 0.0, 1.0),
            (1.0, 1.0),
            (100, 1000, 10_000),
            reps=50,
            seed=7003,
        )
        assert report.passed

    def test_report_fields_and_invariants(self):
        report = sdqm_trend(
            Bruceton(x1=0.0, d=0.5),
            ModelSpec(Link.PROBIT, 0.0, 1.0),
            (0.5, 0.5),
            (50, 200),
            reps=9,
            seed=SimSeed(7100, 3),
        )
        assert report.n_grid == (50, 200)
        assert len(report.sums) == 2
        assert all(s >= 0.0 for s in report.sums)
        assert report.reps == 9
        assert report.design["kind"] == "bruceton"
        assert report.theta == (0.0, 1.0)
        assert report.h == (0.5, 0.5)

    def test_trend_reuses_seed_streams(self):
        # Same seed, same report; different master, different sums.
        args = (
            Bruceton(x1=0.0, d=1.0),
            ModelSpec(Link.LOGIT, 0.0, 1.0),
            (1.0, 0.0),
            (50, 100),
        )
        a = sdqm_trend(*args, reps=5, seed=42)
        b = sdqm_trend(*args, reps=5, seed=42)
        c = sdqm_trend(*args, reps=5, seed=43)
        assert a.sums == b.sums
        assert a.sums != c.sums

    def test_validation(self):
        rule = Bruceton(x1=0.0, d=1.0)
        model = ModelSpec(Link.LOGIT, 0.0, 1.0)
        with pytest.raises(ValueError):
            sdqm_trend(rule, model, (1.0, 0.0), (100, 100), reps=5, seed=1)
        with pytest.raises(ValueError):
            sdqm_trend(rule, model, (1.0, 0.0), (100, 50), reps=5, seed=1)
        with pytest.raises(ValueError):
            sdqm_trend(rule, model, (1.0, 0.0), (100, 200), reps=0, seed=1)

    def test_json_round_trip(self):
        report = sdqm_trend(
            Bruceton(x1=0.0, d=1.0),
            ModelSpec(Link.LOGIT, 0.0, 1.0),
            (1.0, 1.0),
            (50, 100),
            reps=5,
            seed=7200,
        )
        blob = json.loads(report.to_json())
        assert blob["n_grid"] == [50, 100]
        assert blob["sums"] == list(report.sums)
        assert blob["passed"] == report.passed
        assert blob["design"]["kind"] == "bruceton"

    def test_csv_output(self):
        report = sdqm_trend(
            Bruceton(x1=0.0, d=1.0),
            ModelSpec(Link.LOGIT, 0.0, 1.0),
            (1.0, 1.0),
            (50, 100),
            reps=5,
            seed=7200,
        )
        buf = io.StringIO()
        report.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "n,median_sum"
        assert len(lines) == 3
        n, s = lines[1].split(",")
        assert int(n) == 50
        assert float(s) == report.sums[0]


class TestDqmReportType:
    def test_rejects_negative_sums(self):
        with pytest.raises(ValueError):
            DqmReport(
                design={"kind": "bruceton", "x1": 0.0, "d": 1.0},
                link="logit",
                theta=(0.0, 1.0),
                h=(1.0, 0.0),
                n_grid=(10, 20),
                sums=(1.0, -0.5),
                reps=5,
                passed=False,
            )

    def test_rejects_unordered_grid(self):
        with pytest.raises(ValueError):
            DqmReport(
                design={"kind": "bruceton", "x1": 0.0, "d": 1.0},
                link="logit",
                theta=(0.0, 1.0),
                h=(1.0, 0.0),
                n_grid=(20, 10),
                sums=(1.0, 0.5),
                reps=5,
                passed=True,
            )
