import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signed_beta.errors import CurvatureError, DomainError, ReferenceNodeError
from signed_beta.estimation import CurvatureVector, FitResult, fit
from signed_beta.inference import (
    Facet,
    bh_multiple_comparison,
    pairwise_interval,
    pairwise_pvalue,
    rank_report,
)
from signed_beta.model import Theta, sample_network
from signed_beta.numerics import RandomStream, std_normal_quantile


def synthetic_fit(alpha, beta, u, u_check=None, alpha_check=None):
    theta = Theta(alpha, beta)
    check = Theta(alpha_check if alpha_check is not None else alpha, beta)
    uh = CurvatureVector(np.asarray(u, dtype=float))
    uc = CurvatureVector(np.asarray(u_check if u_check is not None else u, dtype=float))
    return FitResult(check, theta, uh, uc, np.zeros(len(alpha)), 0, 0.0)


@pytest.fixture(scope="module")
def fitted50():
    rng = np.random.default_rng(50)
    n = 50
    theta = Theta(rng.normal(-0.5, 0.5, n), np.append(rng.normal(0, 0.5, n - 1), 0.0))
    return fit(sample_network(theta, 0.1, RandomStream(50)), 0.1)


class TestFacet:
    @pytest.mark.parametrize("name, facet", [("alpha", Facet.ALPHA), ("out_status", Facet.ALPHA),
                                             ("beta", Facet.BETA), ("in_status", Facet.BETA),
                                             ("BETA", Facet.BETA)])
    def test_aliases(self, name, facet):
        assert Facet(name) is facet

    def test_unknown(self):
        with pytest.raises(ValueError):
            Facet("degree")


class TestPairwise:
    def test_hand_interval(self):
        f = synthetic_fit([0.3, 0.3, 0.0], [0.0, 0.0, 0.0], [4.0, 4.0, 4.0, 4.0, 4.0, 4.0])
        pr = pairwise_interval(f, "alpha", 0, 1, 0.95)
        assert pr.point == 0.0
        assert pr.delta_hat == pytest.approx(math.sqrt(0.5), abs=1e-15)
        assert pr.lower == pytest.approx(-1.386, abs=5e-4)
        assert pr.upper == pytest.approx(1.386, abs=5e-4)
        assert pr.upper - pr.lower == pytest.approx(2 * 1.959963985 * math.sqrt(0.5), abs=1e-8)
        assert pr.p_value == 1.0

    def test_flip(self, fitted50):
        a = pairwise_interval(fitted50, "beta", 3, 17)
        b = pairwise_interval(fitted50, "beta", 17, 3)
        assert b.point == -a.point
        assert b.delta_hat == a.delta_hat
        assert (b.lower, b.upper) == pytest.approx((-a.upper, -a.lower), abs=1e-15)
        assert b.p_value == a.p_value

    def test_beta_uses_offset_curvatures(self, fitted50):
        n = fitted50.n
        pr = pairwise_interval(fitted50, Facet.BETA, 2, 5)
        u = fitted50.u_hat.u
        assert pr.delta_hat == pytest.approx(math.sqrt(1 / u[n + 2] + 1 / u[n + 5]), rel=1e-15)
        assert pr.point == fitted50.theta_hat.beta[2] - fitted50.theta_hat.beta[5]

    def test_pvalue_at_critical_value(self):
        f = synthetic_fit([1.959964, 0.0], [0.0, 0.0], [2.0, 2.0, 2.0, 2.0])
        assert pairwise_pvalue(f, "alpha", 0, 1) == pytest.approx(0.05, abs=1e-6)

    def test_check_estimate_requested_explicitly(self):
        f = synthetic_fit([1.0, 0.0], [0.0, 0.0], [1.0] * 4, u_check=[4.0] * 4,
                          alpha_check=[2.0, 0.0])
        hat = pairwise_interval(f, "alpha", 0, 1)
        check = pairwise_interval(f, "alpha", 0, 1, estimate="check")
        assert (hat.point, check.point) == (1.0, 2.0)
        assert check.delta_hat == pytest.approx(math.sqrt(0.5))
        with pytest.raises(DomainError):
            pairwise_interval(f, "alpha", 0, 1, estimate="mle")

    def test_duality_on_fitted_network(self, fitted50):
        n = fitted50.n
        level = 0.95
        for facet, top in (("alpha", n), ("beta", n - 1)):
            for i in range(top):
                for j in range(i + 1, top):
                    pr = pairwise_interval(fitted50, facet, i, j, level)
                    if abs(pr.p_value - (1 - level)) < 1e-12:
                        continue
                    assert (pr.p_value < 1 - level) == (not pr.lower <= 0.0 <= pr.upper)
                    assert pr.lower <= pr.point <= pr.upper

    def test_reference_node_rejected(self, fitted50):
        with pytest.raises(ReferenceNodeError):
            pairwise_interval(fitted50, "beta", 0, fitted50.n - 1)
        # the out-status of the last node is an ordinary parameter
        pairwise_interval(fitted50, "alpha", 0, fitted50.n - 1)

    def test_same_node(self, fitted50):
        with pytest.raises(DomainError):
            pairwise_interval(fitted50, "alpha", 4, 4)

    def test_out_of_range(self, fitted50):
        with pytest.raises(DomainError):
            pairwise_interval(fitted50, "alpha", 0, 50)

    def test_non_positive_curvature(self):
        f = synthetic_fit([0.0, 1.0], [0.0, 0.0], [1.0, -1.0, 1.0, 1.0])
        with pytest.raises(CurvatureError):
            pairwise_interval(f, "alpha", 0, 1)

    def test_level_domain(self, fitted50):
        with pytest.raises(DomainError):
            pairwise_interval(fitted50, "alpha", 0, 1, level=1.0)


class TestBH:
    def test_hand_example(self):
        rep = bh_multiple_comparison([0.001, 0.02, 0.04, 0.5], 0.05)
        assert rep.L == pytest.approx(25 / 12)
        assert rep.r == 1
        assert rep.rejected == {0}

    def test_all_ones(self):
        rep = bh_multiple_comparison([1.0] * 5, 0.05)
        assert rep.r is None and rep.rejected == frozenset()

    def test_reject_all_empty_set(self):
        rep = bh_multiple_comparison([1.0] * 3, 0.05, empty_policy="reject-all")
        assert rep.rejected == {0, 1, 2}

    @pytest.mark.parametrize("p, rejected", [(0.05, {0}), (0.0500001, set())])
    def test_single_test(self, p, rejected):
        rep = bh_multiple_comparison([p], 0.05)
        assert rep.L == 1.0
        assert rep.rejected == rejected

    def test_step_up_beyond_first_failure(self):
        # l = 1 fails, l = 2 passes: the step-up rule still rejects both
        k, harmonic = 2, 1.5
        thresholds = [0.05 * l / (k * harmonic) for l in (1, 2)]
        p = [thresholds[1] * 0.99, thresholds[1] * 0.999]
        assert p[0] > thresholds[0]
        assert bh_multiple_comparison(p, 0.05).rejected == {0, 1}

    def test_ties_share_fate(self):
        rep = bh_multiple_comparison([0.001, 0.001, 0.3, 0.001], 0.05, candidates="abcd")
        assert rep.rejected == {"a", "b", "d"}

    @pytest.mark.parametrize("p, alpha", [([-0.1], 0.05), ([1.2], 0.05), ([0.1], 0.0),
                                          ([0.1], 1.0), ([], 0.05), ([np.nan], 0.05)])
    def test_domain(self, p, alpha):
        with pytest.raises(DomainError):
            bh_multiple_comparison(p, alpha)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30),
           st.floats(0.001, 0.5), st.floats(0.001, 0.5))
    def test_monotone_in_alpha(self, p, a1, a2):
        lo, hi = sorted((a1, a2))
        assert bh_multiple_comparison(p, lo).rejected <= bh_multiple_comparison(p, hi).rejected

    @given(st.lists(st.floats(0, 0.2), min_size=1, max_size=30), st.randoms())
    def test_permutation_equivariant(self, p, rnd):
        labels = list(range(len(p)))
        order = labels[:]
        rnd.shuffle(order)
        a = bh_multiple_comparison(p, 0.1, candidates=labels).rejected
        b = bh_multiple_comparison([p[i] for i in order], 0.1, candidates=order).rejected
        assert a == b


class TestRankReport:
    def test_flags(self, fitted50):
        cands = [c for c in range(40) if c != 7]
        rep = rank_report(fitted50, "beta", 7, cands, alpha=0.05)
        assert rep.report.candidates == tuple(cands)
        for row in rep.comparisons:
            assert row.indiv_sig == (row.pairwise.p_value < 0.05)
            assert row.multi_sig == (row.pairwise.j in rep.report.rejected)
            if row.multi_sig:
                assert row.indiv_sig
            assert row.pairwise.level == 0.95

    def test_single_candidate(self, fitted50):
        rep = rank_report(fitted50, "alpha", 1, [2], alpha=0.05)
        p = pairwise_pvalue(fitted50, "alpha", 1, 2)
        assert rep.report.rejected == ({2} if p <= 0.05 else set())

    def test_focal_among_candidates(self, fitted50):
        with pytest.raises(DomainError):
            rank_report(fitted50, "alpha", 1, [1, 2])

    def test_empty_candidates(self, fitted50):
        with pytest.raises(DomainError):
            rank_report(fitted50, "alpha", 1, [])

    def test_global_null_fdp(self):
        """All candidates share the focal status; estimates drawn from their
        asymptotic normal law so the shared focal term correlates the tests."""
        rng = np.random.default_rng(99)
        k, reps, alpha = 30, 500, 0.05
        u = rng.uniform(20, 80, 2 * (k + 1))
        u[-1] = u[: k + 1].sum() - u[k + 1:-1].sum()
        fdp = []
        for _ in range(reps):
            est = rng.normal(0, 1 / np.sqrt(u[: k + 1]))
            f = synthetic_fit(est, np.zeros(k + 1), u)
            rep = rank_report(f, "alpha", 0, range(1, k + 1), alpha)
            fdp.append(1.0 if rep.report.rejected else 0.0)
        assert np.mean(fdp) <= alpha
