import math
import time

import numpy as np
import pytest

from trustfed import planner
from trustfed.errors import DomainError
from trustfed.seeds import derive_seed


def harmonic(n):
    return sum(1.0 / k for k in range(1, n + 1))


class TestExpectedL:
    def test_single_client_sum_is_zero(self):
        # The closed-form sum runs over subset sizes >= 1 and omits the
        # always-certain first unit of coverage; with one client every term
        # vanishes.  coverage_report carries the offset against the oracle.
        assert planner.expected_L(1, 4) == 0.0

    def test_paper_scale_suggests_seven(self):
        started = time.perf_counter()
        value = planner.expected_L(30, 15)
        assert time.perf_counter() - started < 1.0
        assert round(value) == 7

    def test_matches_monte_carlo_tail_sum(self):
        # The sum equals, over subset sizes l >= 1, the probability that the
        # verifiers miss someone; estimate each term independently.
        m, v = 5, 3
        trials = 40000
        total, var = 0.0, 0.0
        for l in range(1, m):
            est = planner.mc_coverage(m, l, trials, derive_seed(99, l))
            p_miss = 1.0 - est.prob_covered(v)
            total += p_miss
            var += p_miss * (1 - p_miss) / trials
        closed = planner.expected_L(m, v)
        assert abs(closed - total) <= 3.0 * math.sqrt(var)

    def test_non_increasing_in_verifier_count(self):
        for m in (5, 12, 30):
            values = [planner.expected_L(m, v) for v in range(1, 12)]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_domain_checks(self):
        with pytest.raises(DomainError):
            planner.expected_L(0, 3)
        with pytest.raises(DomainError):
            planner.expected_L(3, 0)


class TestExpectedV:
    def test_full_subset_needs_one_verifier(self):
        assert planner.expected_V(6, 6) == pytest.approx(1.0, abs=1e-12)

    def test_paper_scale_evaluates_quickly(self):
        started = time.perf_counter()
        value = planner.expected_V(30, 7)
        assert time.perf_counter() - started < 1.0
        # Exact rational evaluation puts the mean at 15.7525; the floor is the
        # reference verifier count.  See the acceptance suite for the rounding
        # check against that constant.
        assert 15.0 < value < 16.0

    def test_matches_monte_carlo_mean(self):
        est = planner.mc_coverage(6, 2, trials=200000, seed=5)
        closed = planner.expected_V(6, 2)
        assert abs(closed - est.mean) <= 3.0 * est.std_err

    def test_coupon_collector_closed_form(self):
        for m in (2, 7, 20, 40):
            assert planner.expected_V(m, 1) == pytest.approx(m * harmonic(m), abs=1e-6)

    def test_two_coupons_mean_three(self):
        est = planner.mc_coverage(2, 1, trials=1000000, seed=6)
        assert abs(est.mean - 3.0) <= 3.0 * est.std_err
        assert planner.expected_V(2, 1) == pytest.approx(3.0, abs=1e-9)

    def test_non_increasing_in_subset_size(self):
        for m in (6, 15, 30):
            values = [planner.expected_V(m, l) for l in range(1, m + 1)]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_oversized_subset_rejected(self):
        with pytest.raises(DomainError):
            planner.expected_V(4, 5)


class TestMcCoverage:
    def test_full_subset_always_one_draw(self):
        est = planner.mc_coverage(9, 9, trials=100, seed=0)
        assert est.mean == 1.0
        assert est.prob_covered(1) == 1.0

    def test_same_seed_identical(self):
        a = planner.mc_coverage(8, 3, trials=5000, seed=3)
        b = planner.mc_coverage(8, 3, trials=5000, seed=3)
        assert (a.draws == b.draws).all()

    def test_different_seed_differs(self):
        a = planner.mc_coverage(8, 3, trials=5000, seed=3)
        b = planner.mc_coverage(8, 3, trials=5000, seed=4)
        assert (a.draws != b.draws).any()

    def test_zero_trials_rejected(self):
        with pytest.raises(DomainError):
            planner.mc_coverage(5, 2, trials=0, seed=0)

    def test_prob_covered_monotone(self):
        est = planner.mc_coverage(10, 3, trials=20000, seed=7)
        probs = [est.prob_covered(v) for v in range(1, 30)]
        assert all(a <= b + 1e-12 for a, b in zip(probs, probs[1:]))

    def test_subset_and_single_paths_agree(self):
        # The geometric shortcut for single-item draws must match the generic
        # subset simulator distributionally.
        single = planner.mc_coverage(6, 1, trials=120000, seed=8)
        generic = planner._mc_subsets(6, 1, 120000, np.random.default_rng(9))
        se = math.sqrt(single.std_err ** 2 + generic.std(ddof=1) ** 2 / generic.size)
        assert abs(single.mean - generic.mean()) <= 3.5 * se


class TestCoverageReport:
    def test_subset_size_planning_flags_unit_offset(self):
        report = planner.coverage_report(5, v=3, trials=20000, seed=1)
        assert report["note"] is not None
        assert abs(report["mc_estimate"] - (report["closed_form"] + 1.0)) < 0.05

    def test_verifier_planning_agrees_with_oracle(self):
        report = planner.coverage_report(6, subset_size=2, trials=50000, seed=2)
        assert report["note"] is None
        assert report["gap_sigma"] <= 3.0

    def test_exactly_one_target_required(self):
        with pytest.raises(DomainError):
            planner.coverage_report(5, v=2, subset_size=2)
        with pytest.raises(DomainError):
            planner.coverage_report(5)
