"""The signed beta-model for directed signed networks.

Each ordered pair ``(i, j)`` carries an outcome ``y_ij in {-1, 0, 1}`` written
as ``z+ - z-`` with independent Bernoulli parts

    P(z+ = 1) = sigma(m),    P(z- = 1) = kappa_i * (1 - sigma(m)),

where ``m = alpha_i + beta_j`` is the linear predictor and ``sigma`` the
logistic function.  All formulas below are written in terms of
``s = sigma(m)`` and ``q = 1 - s`` so that ``|m|`` in the hundreds does not
overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import DomainError, ZeroProbabilityError
from .numerics import RandomStream

__all__ = [
    "SignedAdjacency",
    "Theta",
    "KappaVector",
    "kappa_array",
    "edge_pmf",
    "expected_edge",
    "edge_loglik_derivs",
    "loglik_terms",
    "network_loglik",
    "sample_network",
]


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


def _as_pairs(edges, n, label):
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                     dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"{label} must be a sequence of (i, j) pairs")
    if arr.min() < 0 or arr.max() >= n:
        raise DomainError(f"{label} contains node indices outside [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    if loops.any():
        i = int(arr[loops][0, 0])
        raise DomainError(f"{label} contains self loop ({i}, {i})")
    keys = np.unique(arr[:, 0] * n + arr[:, 1])
    return np.column_stack([keys // n, keys % n])


class SignedAdjacency:
    """Directed signed graph on nodes ``0..n-1`` stored as two edge sets.

    ``pos`` and ``neg`` are lexicographically sorted ``(k, 2)`` integer arrays;
    :meth:`dense` materializes the ``n x n`` matrix of outcomes on demand.
    """

    def __init__(self, n, pos_edges=(), neg_edges=()):
        n = int(n)
        if n < 1:
            raise DomainError(f"node count must be positive, got {n}")
        self.n = n
        self.pos = _as_pairs(pos_edges, n, "pos_edges")
        self.neg = _as_pairs(neg_edges, n, "neg_edges")
        both = np.intersect1d(self.pos[:, 0] * n + self.pos[:, 1],
                              self.neg[:, 0] * n + self.neg[:, 1])
        if both.size:
            i, j = divmod(int(both[0]), n)
            raise DomainError(f"pair ({i}, {j}) is both a positive and a negative edge")
        self.pos.setflags(write=False)
        self.neg.setflags(write=False)

    @classmethod
    def from_dense(cls, y) -> "SignedAdjacency":
        y = np.asarray(y)
        if y.ndim != 2 or y.shape[0] != y.shape[1]:
            raise DomainError(f"adjacency must be square, got shape {y.shape}")
        if not np.isin(y, (-1, 0, 1)).all():
            raise DomainError("adjacency entries must lie in {-1, 0, 1}")
        if np.any(np.diag(y) != 0):
            raise DomainError("adjacency diagonal must be zero (no self loops)")
        return cls(y.shape[0], np.argwhere(y == 1), np.argwhere(y == -1))

    def dense(self) -> np.ndarray:
        """Read-only ``int8`` matrix with entries in {-1, 0, 1}."""
        return self._dense

    @cached_property
    def _dense(self):
        y = np.zeros((self.n, self.n), dtype=np.int8)
        y[self.pos[:, 0], self.pos[:, 1]] = 1
        y[self.neg[:, 0], self.neg[:, 1]] = -1
        y.setflags(write=False)
        return y

    @property
    def pos_edges(self) -> frozenset:
        return frozenset(map(tuple, self.pos.tolist()))

    @property
    def neg_edges(self) -> frozenset:
        return frozenset(map(tuple, self.neg.tolist()))

    @property
    def out_degrees(self) -> np.ndarray:
        """Signed out-degrees ``d_i = sum_k y_ik``."""
        return (np.bincount(self.pos[:, 0], minlength=self.n)
                - np.bincount(self.neg[:, 0], minlength=self.n))

    @property
    def in_degrees(self) -> np.ndarray:
        """Signed in-degrees ``b_j = sum_k y_kj``."""
        return (np.bincount(self.pos[:, 1], minlength=self.n)
                - np.bincount(self.neg[:, 1], minlength=self.n))

    def subgraph(self, nodes) -> "SignedAdjacency":
        """Induced subgraph on ``nodes``, reindexed in ascending order."""
        nodes = np.unique(np.asarray(list(nodes), dtype=np.int64))
        index = np.full(self.n, -1, dtype=np.int64)
        index[nodes] = np.arange(nodes.size)

        def keep(edges):
            mapped = index[edges]
            return mapped[(mapped >= 0).all(axis=1)]

        return SignedAdjacency(nodes.size, keep(self.pos), keep(self.neg))

    def __eq__(self, other):
        if not isinstance(other, SignedAdjacency):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.pos, other.pos)
                and np.array_equal(self.neg, other.neg))

    __hash__ = None

    def __repr__(self):
        return (f"SignedAdjacency(n={self.n}, positive={len(self.pos)}, "
                f"negative={len(self.neg)})")


@dataclass(frozen=True, eq=False)
class Theta:
    """Node parameters: out-status ``alpha`` and in-status ``beta``.

    ``beta[n-1]`` is pinned to zero for identifiability, so the free
    parameter vector ``(alpha, beta[:-1])`` has length ``2n - 1``.
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        b = np.array(self.beta, dtype=float)
        if a.ndim != 1 or a.shape != b.shape or a.size < 1:
            raise DomainError("alpha and beta must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("theta entries must be finite")
        if b[-1] != 0.0:
            raise DomainError(f"beta[n-1] must be pinned to 0, got {b[-1]!r}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def n(self) -> int:
        return self.alpha.size

    @classmethod
    def zeros(cls, n: int) -> "Theta":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_free(cls, vector) -> "Theta":
        """Build from the ``2n - 1`` free coordinates ``(alpha, beta[:-1])``."""
        v = np.asarray(vector, dtype=float)
        n = (v.size + 1) // 2
        if v.ndim != 1 or v.size != 2 * n - 1:
            raise DomainError(f"free vector must have odd length 2n-1, got {v.size}")
        return cls(v[:n], np.append(v[n:], 0.0))

    @property
    def free(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta[:-1]])

    def predictor(self) -> np.ndarray:
        """Matrix of linear predictors ``m_ij = alpha_i + beta_j``."""
        return self.alpha[:, None] + self.beta[None, :]

    def __eq__(self, other):
        if not isinstance(other, Theta):
            return NotImplemented
        return (np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.beta, other.beta))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class KappaVector:
    """Per-node negative-edge sparsity, each entry one of two levels."""

    values: np.ndarray
    kappa00: float
    kappa01: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        k0, k1 = float(self.kappa00), float(self.kappa01)
        if not 0.0 < k0 < k1 < 1.0:
            raise DomainError(
                f"need 0 < kappa00 < kappa01 < 1, got kappa00={k0}, kappa01={k1}"
            )
        if v.ndim != 1 or not np.all((v == k0) | (v == k1)):
            raise DomainError("every kappa value must equal kappa00 or kappa01")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kappa00", k0)
        object.__setattr__(self, "kappa01", k1)

    @classmethod
    def from_classes(cls, high, kappa00, kappa01) -> "KappaVector":
        """``high`` is a boolean mask of nodes at the ``kappa01`` level."""
        high = np.asarray(high, dtype=bool)
        return cls(np.where(high, kappa01, kappa00), kappa00, kappa01)

    @property
    def high(self) -> np.ndarray:
        return self.values == self.kappa01

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, KappaVector):
            return NotImplemented
        return (np.array_equal(self.values, other.values)
                and self.kappa00 == other.kappa00 and self.kappa01 == other.kappa01)

    __hash__ = None


def kappa_array(kappa, n=None) -> np.ndarray:
    """Coerce a KappaVector, scalar or array to a float array of length ``n``."""
    if isinstance(kappa, KappaVector):
        arr = kappa.values
    else:
        arr = np.asarray(kappa, dtype=float)
        if not np.all((arr >= 0.0) & (arr < 1.0)):
            raise DomainError(f"kappa must lie in [0, 1), got {kappa!r}")
    if n is not None:
        if arr.ndim == 0:
            arr = np.full(n, float(arr))
        elif arr.shape != (n,):
            raise DomainError(f"kappa has length {arr.size}, expected {n}")
    return arr


# --------------------------------------------------------------------------
# Edge-level distribution
# --------------------------------------------------------------------------


def _check_kappa(kappa):
    k = np.asarray(kappa, dtype=float)
    if not np.all((k >= 0.0) & (k < 1.0)):
        raise DomainError(f"kappa must lie in [0, 1), got {kappa!r}")
    return k


def _check_sign(y):
    y = np.asarray(y)
    if not np.isin(y, (-1, 0, 1)).all():
        raise DomainError(f"outcome must be -1, 0 or 1, got {y!r}")
    return y


def _finite(m):
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise DomainError(f"linear predictor must be finite, got {m!r}")
    return m


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def edge_pmf(y, m, kappa):
    """``P(y | m, kappa)``; broadcasts over array arguments."""
    y, m, k = _check_sign(y), _finite(m), _check_kappa(kappa)
    s, q = expit(m), expit(-m)
    p = np.where(y == 1, s * (1.0 - k * q),
                 np.where(y == 0, q * (1.0 + k * (s - q)), k * q * q))
    return _out(p)


def expected_edge(m, kappa):
    """``E[y] = (e^m - kappa) / (1 + e^m)``."""
    m, k = _finite(m), _check_kappa(kappa)
    return _out(expit(m) - k * expit(-m))


def edge_variance(m, kappa):
    m, k = _finite(m), _check_kappa(kappa)
    s, q = expit(m), expit(-m)
    second = s * (1.0 - k * q) + k * q * q
    return _out(second - (s - k * q) ** 2)


def _logistic_parts(m):
    """``s, q, log s, log q`` from a single exp/log1p pass."""
    t = np.exp(-np.abs(m))
    r = 1.0 / (1.0 + t)
    lp = np.log1p(t)
    nonneg = m >= 0
    s = np.where(nonneg, r, t * r)
    q = np.where(nonneg, t * r, r)
    log_q = np.where(nonneg, -m - lp, -lp)
    return s, q, log_q + m, log_q


def loglik_terms(y, m, kappa, derivatives=True):
    """Vectorized ``(l, l', l'')`` of ``log p(y | m, kappa)`` in ``m``.

    No validation; a ``-1`` outcome at ``kappa = 0`` yields ``-inf``.  With
    ``derivatives=False`` only ``l`` is computed and returned.
    """
    y = np.asarray(y)
    m = np.asarray(m, dtype=float)
    y, m, k = np.broadcast_arrays(y, m, np.asarray(kappa, dtype=float))
    s, q, log_s, log_q = _logistic_parts(m)
    pos, neg = y == 1, y == -1
    kq = k * q
    ksq = kq * s
    # 1 - k q on y = 1 and 1 + k (s - q) on y = 0
    h = np.where(pos, 1.0 - kq, 1.0 + k * (s - q))
    with np.errstate(divide="ignore"):
        l = np.where(pos, log_s + np.log1p(-kq),
                     np.where(neg, np.log(k) + 2.0 * log_q,
                              log_q + np.log1p(k * (s - q))))
    if not derivatives:
        return l
    sq = s * q
    d1 = np.where(pos, q + ksq / h, np.where(neg, -2.0 * s, -s + 2.0 * ksq / h))
    hh = h * h
    d2 = np.where(pos, -sq + ksq * ((q - s) * h - ksq) / hh,
                  np.where(neg, -2.0 * sq,
                           -sq + 2.0 * ksq * ((q - s) * h - 2.0 * ksq) / hh))
    return l, d1, d2


def edge_loglik_derivs(m, kappa, y):
    """Log-likelihood of one edge and its first two derivatives in ``m``."""
    y, m, k = _check_sign(y), _finite(m), _check_kappa(kappa)
    zero_prob = (y == -1) & (k == 0.0)
    if np.any(zero_prob):
        raise ZeroProbabilityError(y.tolist(), m.tolist(), k.tolist())
    l, d1, d2 = loglik_terms(y, m, k)
    return _out(l), _out(d1), _out(d2)


def expected_neg_curvature(m, kappa):
    """``E[-l''(m)]`` under the model at ``(m, kappa)``."""
    m, k = _finite(m), _check_kappa(kappa)
    total = 0.0
    for y in (-1, 0, 1):
        p = edge_pmf(y, m, k)
        _, _, d2 = loglik_terms(np.int8(y), m, k)
        total = total - np.where(p > 0, p * d2, 0.0)
    return _out(total)


# --------------------------------------------------------------------------
# Network level
# --------------------------------------------------------------------------


def _raise_zero_prob(y, m, k_rows):
    bad = (y == -1) & (k_rows == 0.0)
    np.fill_diagonal(bad, False)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ZeroProbabilityError(-1, float(m[i, j]), 0.0)


def network_loglik(graph: SignedAdjacency, theta: Theta, kappa) -> float:
    """``sum_{i != j} log p(y_ij | alpha_i + beta_j, kappa_i)``."""
    n = graph.n
    if theta.n != n:
        raise DomainError(f"theta has {theta.n} nodes, graph has {n}")
    k = kappa_array(kappa, n)
    return loglik_from_predictor(graph.dense(), theta.predictor(), k)


def loglik_from_predictor(y, m, kappa_rows) -> float:
    """Network log-likelihood for an arbitrary predictor matrix ``m``."""
    k = np.broadcast_to(np.asarray(kappa_rows, dtype=float)[:, None], m.shape)
    _raise_zero_prob(y, m, k)
    l = loglik_terms(y, m, k, derivatives=False)
    np.fill_diagonal(l, 0.0)
    return float(l.sum())


def sample_network(theta: Theta, kappa, rng: RandomStream) -> SignedAdjacency:
    """Draw ``y_ij = z+_ij - z-_ij`` independently for every ordered pair."""
    n = theta.n
    k = kappa_array(kappa, n)
    m = theta.predictor()
    z_pos = rng.random((n, n)) < expit(m)
    z_neg = rng.random((n, n)) < k[:, None] * expit(-m)
    y = z_pos.astype(np.int8) - z_neg.astype(np.int8)
    np.fill_diagonal(y, 0)
    return SignedAdjacency.from_dense(y)
