import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signed_beta.errors import DomainError, ZeroProbabilityError
from signed_beta.model import (
    KappaVector,
    SignedAdjacency,
    Theta,
    edge_loglik_derivs,
    edge_pmf,
    edge_variance,
    expected_edge,
    expected_neg_curvature,
    kappa_array,
    loglik_from_predictor,
    loglik_terms,
    network_loglik,
    sample_network,
)
from signed_beta.numerics import RandomStream

mpmath.mp.dps = 40


def mp_pmf(y, m, k):
    """Oracle from the latent decomposition y = z+ - z-, in 40-digit arithmetic."""
    m, k = mpmath.mpf(m), mpmath.mpf(k)
    p_pos = mpmath.e ** m / (1 + mpmath.e ** m)
    p_neg = k / (1 + mpmath.e ** m)
    return {1: p_pos * (1 - p_neg), -1: (1 - p_pos) * p_neg,
            0: p_pos * p_neg + (1 - p_pos) * (1 - p_neg)}[y]


def mp_log_derivs(y, m, k):
    f = lambda t: mpmath.log(mp_pmf(y, t, k))
    return (float(f(m)), float(mpmath.diff(f, m, 1)), float(mpmath.diff(f, m, 2)))


class TestSignedAdjacency:
    def test_edge_sets(self):
        g = SignedAdjacency(3, [(0, 1), (2, 0)], [(1, 2)])
        assert g.pos_edges == {(0, 1), (2, 0)}
        assert g.neg_edges == {(1, 2)}
        np.testing.assert_array_equal(g.dense(), [[0, 1, 0], [0, 0, -1], [1, 0, 0]])

    def test_degrees(self):
        g = SignedAdjacency(3, [(0, 1), (0, 2)], [(1, 2)])
        np.testing.assert_array_equal(g.out_degrees, [2, -1, 0])
        np.testing.assert_array_equal(g.in_degrees, [0, 1, 0])

    def test_rejects_self_loop(self):
        with pytest.raises(DomainError, match="self loop"):
            SignedAdjacency(3, [(1, 1)])

    def test_rejects_overlap(self):
        with pytest.raises(DomainError, match="both"):
            SignedAdjacency(3, [(0, 1)], [(0, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            SignedAdjacency(2, [(0, 2)])

    def test_dense_round_trip(self, rng):
        y = rng.integers(-1, 2, size=(6, 6)).astype(np.int8)
        np.fill_diagonal(y, 0)
        g = SignedAdjacency.from_dense(y)
        np.testing.assert_array_equal(g.dense(), y)
        assert SignedAdjacency.from_dense(g.dense()) == g

    def test_subgraph(self):
        g = SignedAdjacency(4, [(0, 3), (3, 1)], [(1, 0), (2, 3)])
        sub = g.subgraph([3, 1])
        assert sub.n == 2
        assert sub.pos_edges == {(1, 0)}
        assert sub.neg_edges == set()


class TestThetaKappa:
    def test_pin_enforced(self):
        with pytest.raises(DomainError, match="pinned"):
            Theta([0.0, 0.0], [0.0, 1.0])

    def test_free_round_trip(self, rng):
        free = rng.normal(size=9)
        th = Theta.from_free(free)
        assert th.n == 5 and th.beta[-1] == 0.0
        np.testing.assert_array_equal(th.free, free)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            Theta([np.nan, 0.0], [0.0, 0.0])

    def test_kappa_levels(self):
        kv = KappaVector.from_classes([True, False, True], 0.001, 0.2)
        np.testing.assert_array_equal(kv.values, [0.2, 0.001, 0.2])
        np.testing.assert_array_equal(kv.high, [True, False, True])

    @pytest.mark.parametrize("k0, k1", [(0.2, 0.1), (0.0, 0.1), (0.1, 1.0)])
    def test_kappa_order(self, k0, k1):
        with pytest.raises(DomainError):
            KappaVector.from_classes([True], k0, k1)

    def test_kappa_values_must_be_levels(self):
        with pytest.raises(DomainError):
            KappaVector([0.1, 0.3], 0.1, 0.2)

    def test_kappa_array(self):
        np.testing.assert_array_equal(kappa_array(0.3, 3), [0.3, 0.3, 0.3])
        with pytest.raises(DomainError):
            kappa_array([0.1, 1.2])
        with pytest.raises(DomainError):
            kappa_array([0.1, 0.2], 3)


class TestEdgePmf:
    def test_logistic_limit(self):
        assert edge_pmf(1, 0.0, 0.0) == 0.5
        assert edge_pmf(-1, 0.0, 0.0) == 0.0

    def test_half_kappa_at_zero(self):
        assert edge_pmf(-1, 0.0, 0.5) == pytest.approx(0.125, abs=1e-15)
        assert edge_pmf(0, 0.0, 0.5) == pytest.approx(0.5, abs=1e-15)
        assert edge_pmf(1, 0.0, 0.5) == pytest.approx(0.375, abs=1e-15)

    def test_negative_outcome_formula(self):
        assert edge_pmf(-1, 1.0, 0.2) == pytest.approx(0.2 / (1 + math.e) ** 2, rel=1e-14)
        assert edge_pmf(-1, 1.0, 0.2) == pytest.approx(0.014465, abs=1e-6)

    @pytest.mark.parametrize("y", [-1, 0, 1])
    @pytest.mark.parametrize("m", [-6.0, -1.3, 0.0, 0.4, 2.5, 7.0])
    @pytest.mark.parametrize("k", [0.001, 0.05, 0.25, 0.9])
    def test_matches_latent_oracle(self, y, m, k):
        assert edge_pmf(y, m, k) == pytest.approx(float(mp_pmf(y, m, k)), rel=1e-12, abs=1e-300)

    def test_normalization_and_monotonicity(self):
        m = np.linspace(-8, 8, 401)
        for k in (0.001, 0.05, 0.25, 0.9):
            p = [edge_pmf(y, m, k) for y in (-1, 0, 1)]
            np.testing.assert_allclose(p[0] + p[1] + p[2], 1.0, rtol=0, atol=1e-12)
            assert np.all(np.diff(p[2]) > 0)
            assert np.all(np.diff(p[0]) < 0)

    def test_reduces_to_logistic(self):
        m = np.linspace(-10, 10, 81)
        logistic = 1 / (1 + np.exp(-m))
        np.testing.assert_allclose(edge_pmf(1, m, 1e-12), logistic, rtol=0, atol=1e-9)
        np.testing.assert_allclose(edge_pmf(0, m, 1e-12), 1 - logistic, rtol=0, atol=1e-9)

    def test_extreme_predictor_no_overflow(self):
        for m in (-700.0, 700.0):
            p = [edge_pmf(y, m, 0.3) for y in (-1, 0, 1)]
            assert all(np.isfinite(p))
            assert sum(p) == pytest.approx(1.0, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            edge_pmf(1, 0.0, 1.0)
        with pytest.raises(DomainError):
            edge_pmf(2, 0.0, 0.1)
        with pytest.raises(DomainError):
            edge_pmf(1, np.inf, 0.1)


class TestMoments:
    def test_expected_edge_values(self):
        assert expected_edge(0.0, 0.0) == 0.5
        assert expected_edge(0.0, 0.5) == pytest.approx(0.25, abs=1e-15)

    def test_expectation_consistency(self, rng):
        for m, k in zip(rng.normal(0, 3, 20), rng.uniform(0, 0.99, 20)):
            mean = sum(y * edge_pmf(y, m, k) for y in (-1, 0, 1))
            assert abs(expected_edge(m, k) - mean) <= 1e-12

    def test_variance_consistency(self, rng):
        for m, k in zip(rng.normal(0, 3, 20), rng.uniform(0, 0.99, 20)):
            mean = sum(y * edge_pmf(y, m, k) for y in (-1, 0, 1))
            second = edge_pmf(1, m, k) + edge_pmf(-1, m, k)
            assert edge_variance(m, k) == pytest.approx(second - mean**2, abs=1e-12)

    def test_expected_curvature_by_enumeration(self, rng):
        for m, k in zip(rng.normal(0, 2, 10), rng.uniform(0.01, 0.9, 10)):
            oracle = -sum(float(mp_pmf(y, m, k)) * mp_log_derivs(y, m, k)[2]
                          for y in (-1, 0, 1))
            assert expected_neg_curvature(m, k) == pytest.approx(oracle, rel=1e-9)

    def test_expected_curvature_logistic(self):
        m = np.linspace(-5, 5, 21)
        s = 1 / (1 + np.exp(-m))
        np.testing.assert_allclose(expected_neg_curvature(m, 0.0), s * (1 - s), rtol=1e-12)


class TestLoglikDerivatives:
    def test_logistic_score(self):
        _, d1, _ = edge_loglik_derivs(0.0, 0.0, 1)
        assert d1 == 0.5
        m = np.linspace(-4, 4, 9)
        _, d1, _ = edge_loglik_derivs(m, 0.0, 1)
        np.testing.assert_allclose(d1, 1 / (1 + np.exp(m)), rtol=1e-14)

    def test_first_derivative_finite_difference(self):
        h = 1e-5
        l_plus = edge_loglik_derivs(0.7 + h, 0.2, 0)[0]
        l_minus = edge_loglik_derivs(0.7 - h, 0.2, 0)[0]
        fd = (l_plus - l_minus) / (2 * h)
        assert edge_loglik_derivs(0.7, 0.2, 0)[1] == pytest.approx(fd, rel=1e-6)

    def test_second_derivative_finite_difference(self):
        h = 1e-4
        l = [edge_loglik_derivs(-1.3 + t, 0.1, -1)[0] for t in (-h, 0.0, h)]
        fd = (l[0] - 2 * l[1] + l[2]) / h**2
        assert edge_loglik_derivs(-1.3, 0.1, -1)[2] == pytest.approx(fd, rel=1e-5)

    def test_thousand_random_points(self, rng):
        """Central differences on the analytic l and l', worst relative error."""
        m = rng.uniform(-6, 6, 1000)
        k = rng.uniform(0.001, 0.95, 1000)
        y = rng.integers(-1, 2, 1000)
        h = 1e-5
        l, d1, d2 = loglik_terms(y, m, k)
        lp, d1p, _ = loglik_terms(y, m + h, k)
        lm, d1m, _ = loglik_terms(y, m - h, k)
        fd1 = (lp - lm) / (2 * h)
        fd2 = (d1p - d1m) / (2 * h)
        scale1 = np.maximum(np.abs(d1), 1e-3)
        scale2 = np.maximum(np.abs(d2), 1e-3)
        assert np.max(np.abs(d1 - fd1) / scale1) <= 1e-5
        assert np.max(np.abs(d2 - fd2) / scale2) <= 1e-5

    @pytest.mark.parametrize("y", [-1, 0, 1])
    def test_against_arbitrary_precision(self, y, rng):
        for m, k in zip(rng.uniform(-8, 8, 15), rng.uniform(0.001, 0.99, 15)):
            got = edge_loglik_derivs(m, k, y)
            want = mp_log_derivs(y, m, k)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-13)

    @given(st.floats(-30, 30), st.floats(1e-6, 0.999), st.sampled_from([-1, 0, 1]))
    def test_log_matches_pmf(self, m, k, y):
        l, _, _ = edge_loglik_derivs(m, k, y)
        assert l == pytest.approx(math.log(edge_pmf(y, m, k)), rel=1e-10, abs=1e-12)

    def test_zero_probability(self):
        with pytest.raises(ZeroProbabilityError) as info:
            edge_loglik_derivs(0.3, 0.0, -1)
        assert info.value.y == -1


class TestNetworkLoglik:
    def test_empty_graph(self):
        # every pair is a zero outcome with p(0 | 0, 0.5) = 0.5 * (1 + 0.5 * 0) = 0.5
        n = 5
        got = network_loglik(SignedAdjacency(n), Theta.zeros(n), 0.5)
        assert got == pytest.approx(n * (n - 1) * math.log(0.5), rel=1e-14)

    def test_three_nodes_enumerated(self, rng):
        y = np.array([[0, 1, -1], [0, 0, 1], [-1, 1, 0]])
        g = SignedAdjacency.from_dense(y)
        th = Theta(rng.normal(size=3), np.append(rng.normal(size=2), 0.0))
        k = np.array([0.1, 0.3, 0.6])
        want = sum(edge_loglik_derivs(th.alpha[i] + th.beta[j], k[i], y[i, j])[0]
                   for i in range(3) for j in range(3) if i != j)
        assert network_loglik(g, th, k) == pytest.approx(want, rel=1e-13)

    def test_shift_invariance(self, rng):
        g = sample_network(Theta(rng.normal(size=6), np.zeros(6)), 0.2, RandomStream(3))
        a, b = rng.normal(size=6), rng.normal(size=6)
        m1 = a[:, None] + b[None, :]
        m2 = (a + 1.7)[:, None] + (b - 1.7)[None, :]
        y = g.dense()
        k = np.full(6, 0.2)
        assert loglik_from_predictor(y, m1, k) == pytest.approx(
            loglik_from_predictor(y, m2, k), rel=1e-12)

    def test_zero_probability_propagates(self):
        g = SignedAdjacency(2, [], [(0, 1)])
        with pytest.raises(ZeroProbabilityError):
            network_loglik(g, Theta.zeros(2), [0.0, 0.5])


class TestSampling:
    def test_deterministic(self):
        th = Theta(np.linspace(-1, 1, 30), np.append(np.linspace(1, -1, 29), 0.0))
        g1 = sample_network(th, 0.2, RandomStream(9, 4))
        g2 = sample_network(th, 0.2, RandomStream(9, 4))
        assert g1 == g2

    def test_no_diagonal(self):
        g = sample_network(Theta(np.full(20, 5.0), np.zeros(20)), 0.5, RandomStream(1))
        assert np.all(np.diag(g.dense()) == 0)

    def test_very_low_status(self):
        n = 40
        g = sample_network(Theta(np.full(n, -50.0), np.zeros(n)), 0.3, RandomStream(2))
        assert len(g.pos) == 0
        rate = len(g.neg) / (n * (n - 1))
        assert abs(rate - 0.3) < 4 * math.sqrt(0.3 * 0.7 / (n * (n - 1)))

    def test_empirical_pmf(self):
        # 10^5 ordered pairs at a common predictor 0.3, kappa 0.2
        n = 317
        alpha = np.full(n, 0.3)
        g = sample_network(Theta(alpha, np.zeros(n)), 0.2, RandomStream(5, 1))
        y = g.dense()[~np.eye(n, dtype=bool)]
        total = y.size
        for outcome in (-1, 0, 1):
            p = edge_pmf(outcome, 0.3, 0.2)
            freq = np.mean(y == outcome)
            assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / total)
