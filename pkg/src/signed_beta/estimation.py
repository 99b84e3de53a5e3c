"""Two-stage fitting of the node parameters for a known sparsity vector.

Stage one solves the moment equations ``F(theta; kappa) = 0`` that match the
observed signed out/in-degrees to their expectations (damped Newton, dense
Jacobian).  Stage two takes a single likelihood step from that root using the
diagonal-plus-block-constant approximation of the inverse information matrix.

Free-parameter layout everywhere in this module: index ``i < n`` is
``alpha_i`` and index ``n + j`` (``j < n - 1``) is ``beta_j``.  Curvature
vectors carry one more entry, index ``2n - 1``, for the pinned ``beta_{n-1}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    CurvatureError,
    DegenerateDegreeError,
    DomainError,
    NonConvergenceError,
    ZeroProbabilityError,
)
from .model import (
    SignedAdjacency,
    Theta,
    edge_variance,
    expected_neg_curvature,
    kappa_array,
    loglik_terms,
)
from .numerics import DenseSystem, solve_dense

__all__ = [
    "SolverConfig",
    "EstimatingSystem",
    "CurvatureVector",
    "HMatrix",
    "FitResult",
    "estimating_equations",
    "screen_degrees",
    "newton_solve",
    "observed_curvatures",
    "loglik_gradient",
    "build_h_matrix",
    "one_step",
    "fit",
    "fit_estimates",
    "population_quantities",
    "asymptotic_variances",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the damped Newton solve of the estimating equations.

    ``degree_margin`` widens the degeneracy screen: a node is rejected when
    its signed degree lies within ``degree_margin`` of the range the model
    can reproduce, ``(-sum kappa, n - 1)``.
    """

    tol: float = 1e-8
    max_iterations: int = 200
    max_halvings: int = 30
    screen: bool = True
    degree_margin: float = 0.0


@dataclass(frozen=True)
class EstimatingSystem:
    residual: np.ndarray
    jacobian: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CurvatureVector:
    """Observed negative second derivatives, one per coordinate (length 2n)."""

    u: np.ndarray

    @property
    def n(self) -> int:
        return self.u.size // 2

    @property
    def free(self) -> np.ndarray:
        return self.u[:-1]

    @property
    def u2n(self) -> float:
        return float(self.u[-1])

    @property
    def alpha(self) -> np.ndarray:
        return self.u[: self.n]

    @property
    def beta(self) -> np.ndarray:
        """In-status curvatures for ``beta_0..beta_{n-1}`` (last one derived)."""
        return self.u[self.n:]


@dataclass(frozen=True)
class HMatrix:
    """Structured approximate inverse information matrix.

    Dense form::

        [ diag(1/u_a) + c 11'      -c 11'            ]
        [ -c 11'                   diag(1/u_b) + c 11' ]

    with ``c = 1/u_2n``; products cost O(n).
    """

    diag_inverse_u: np.ndarray
    u2n_inverse: float

    @property
    def n(self) -> int:
        return (self.diag_inverse_u.size + 1) // 2

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.n
        shift = self.u2n_inverse * (x[:n].sum() - x[n:].sum())
        out = self.diag_inverse_u * x
        out[:n] += shift
        out[n:] -= shift
        return out

    __matmul__ = matvec

    def dense(self) -> np.ndarray:
        """Materialized matrix; for checks only."""
        n = self.n
        sign = np.ones(2 * n - 1)
        sign[n:] = -1.0
        return np.diag(self.diag_inverse_u) + self.u2n_inverse * np.outer(sign, sign)


@dataclass(frozen=True)
class FitResult:
    theta_check: Theta
    theta_hat: Theta
    u_hat: CurvatureVector
    u_check: CurvatureVector
    kappa: np.ndarray
    newton_iterations: int
    final_residual_inf_norm: float

    @property
    def n(self) -> int:
        return self.theta_hat.n


# --------------------------------------------------------------------------
# Estimating equations and Newton
# --------------------------------------------------------------------------


def _check_dims(graph, theta, k):
    if theta.n != graph.n:
        raise DomainError(f"theta has {theta.n} nodes, graph has {graph.n}")


def _edge_means(theta, k):
    m = theta.predictor()
    s = expit(m)
    q = 1.0 - s
    np.fill_diagonal(s, 0.0)
    np.fill_diagonal(q, 0.0)
    return s, q


def _residual(d, b, theta, k):
    s, q = _edge_means(theta, k)
    mean = s - k[:, None] * q
    n = theta.n
    return np.concatenate([d - mean.sum(axis=1), (b - mean.sum(axis=0))[: n - 1]])



def _moment_terms(d, b, theta, k):
    s, q = _edge_means(theta, k)
    n = theta.n
    mean = s - k[:, None] * q
    residual = np.concatenate([d - mean.sum(axis=1), (b - mean.sum(axis=0))[: n - 1]])
    # d E[y_ij] / d m_ij = (1 + kappa_i) s q
    w = (1.0 + k)[:, None] * s * q
    return residual, w


def _jacobian(w):
    n = w.shape[0]
    jac = np.zeros((2 * n - 1, 2 * n - 1))
    idx_a = np.arange(n)
    idx_b = np.arange(n, 2 * n - 1)
    jac[idx_a, idx_a] = -w.sum(axis=1)
    jac[idx_b, idx_b] = -w.sum(axis=0)[: n - 1]
    jac[:n, n:] = -w[:, : n - 1]
    jac[n:, :n] = -w[:, : n - 1].T
    return jac


def _system(d, b, theta, k):
    residual, w = _moment_terms(d, b, theta, k)
    return EstimatingSystem(residual, _jacobian(w))


def _newton_step(residual, w):
    """Solve ``J step = -F`` by eliminating the diagonal alpha block.

    With ``-J = [[A, C], [C', B]]`` (``A``, ``B`` diagonal) the beta part solves
    the Schur system ``(B - C' A^-1 C) z = F_b - C' A^-1 F_a``, which goes
    through :func:`solve_dense`; the alpha part is then explicit.
    """
    n = w.shape[0]
    a = w.sum(axis=1)
    bdiag = w.sum(axis=0)[: n - 1]
    c = w[:, : n - 1]
    scaled = c / a[:, None]
    schur = -(c.T @ scaled)
    schur[np.diag_indices_from(schur)] += bdiag
    f_a, f_b = residual[:n], residual[n:]
    z = solve_dense(DenseSystem(schur, f_b - scaled.T @ f_a))
    x = (f_a - c @ z) / a
    return np.concatenate([x, z])


def estimating_equations(graph: SignedAdjacency, theta: Theta, kappa) -> EstimatingSystem:
    """Residual ``F(theta; kappa)`` and its exact Jacobian in the free coordinates."""
    k = kappa_array(kappa, graph.n)
    _check_dims(graph, theta, k)
    return _system(graph.out_degrees.astype(float), graph.in_degrees.astype(float),
                   theta, k)


def screen_degrees(graph: SignedAdjacency, kappa, margin: float = 0.0) -> None:
    """Raise :class:`DegenerateDegreeError` for degrees the model cannot match.

    Every ``E[y_ij]`` lies in ``(-kappa_i, 1)``, so a root can only exist when
    ``-kappa_i (n-1) < d_i < n-1`` and ``-sum_{k != j} kappa_k < b_j < n-1``.
    """
    n = graph.n
    k = kappa_array(kappa, n)
    d, b = graph.out_degrees, graph.in_degrees
    out_lo = -k * (n - 1) + margin
    in_lo = -(k.sum() - k) + margin
    hi = (n - 1) - margin
    bad_out = np.flatnonzero((d <= out_lo) | (d >= hi))
    bad_in = np.flatnonzero((b <= in_lo) | (b >= hi))
    if bad_out.size or bad_in.size:
        raise DegenerateDegreeError(bad_out, bad_in)


def _newton(graph, k, config, initial=None):
    n = graph.n
    if n < 2:
        raise DomainError("need at least two nodes")
    if config.screen:
        screen_degrees(graph, k, config.degree_margin)
    d = graph.out_degrees.astype(float)
    b = graph.in_degrees.astype(float)
    theta = Theta.zeros(n) if initial is None else initial
    residual, w = _moment_terms(d, b, theta, k)
    norm = np.abs(residual).max()
    iterations = 0
    while norm > config.tol:
        if iterations >= config.max_iterations:
            raise NonConvergenceError(
                f"Newton did not converge in {config.max_iterations} iterations", norm)
        step = _newton_step(residual, w)
        x = theta.free
        t = 1.0
        for _ in range(config.max_halvings + 1):
            candidate = Theta.from_free(x + t * step)
            cand_norm = np.abs(_residual(d, b, candidate, k)).max()
            if cand_norm < norm:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(
                f"step halving failed after {config.max_halvings} halvings", norm)
        theta = candidate
        iterations += 1
        residual, w = _moment_terms(d, b, theta, k)
        norm = np.abs(residual).max()
        log.debug("newton iter %d: step %.3g, ||F|| = %.3e", iterations, t, norm)
    return theta, iterations, float(norm)


def newton_solve(graph: SignedAdjacency, kappa, config: SolverConfig | None = None,
                 initial: Theta | None = None) -> Theta:
    """Root of the estimating equations (the initial estimate).

    Starts from ``theta = 0`` unless ``initial`` is given; each Newton step is
    halved until the sup-norm of the residual decreases.
    """
    k = kappa_array(kappa, graph.n)
    theta, _, _ = _newton(graph, k, config or SolverConfig(), initial)
    return theta


# --------------------------------------------------------------------------
# Likelihood derivatives and the one-step update
# --------------------------------------------------------------------------


def _derivative_matrices(graph, theta, k):
    y = graph.dense()
    m = theta.predictor()
    kk = np.broadcast_to(k[:, None], m.shape)
    bad = (y == -1) & (kk == 0.0)
    np.fill_diagonal(bad, False)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ZeroProbabilityError(-1, float(m[i, j]), 0.0)
    _, d1, d2 = loglik_terms(y, m, kk)
    np.fill_diagonal(d1, 0.0)
    np.fill_diagonal(d2, 0.0)
    return d1, d2


def _curvatures_from(d2):
    n = d2.shape[0]
    u = np.empty(2 * n)
    u[:n] = -d2.sum(axis=1)
    u[n:2 * n - 1] = -d2.sum(axis=0)[: n - 1]
    u[-1] = u[:n].sum() - u[n:2 * n - 1].sum()
    return CurvatureVector(u)


def observed_curvatures(graph: SignedAdjacency, theta: Theta, kappa) -> CurvatureVector:
    """``u_i = -d^2 l / d alpha_i^2``, ``u_{n+j} = -d^2 l / d beta_j^2`` and
    ``u_2n = sum(u_alpha) - sum(u_beta)``."""
    k = kappa_array(kappa, graph.n)
    _check_dims(graph, theta, k)
    _, d2 = _derivative_matrices(graph, theta, k)
    return _curvatures_from(d2)


def loglik_gradient(graph: SignedAdjacency, theta: Theta, kappa) -> np.ndarray:
    """Score vector of length 2n; the last entry is ``sum_{i<n-1} l'_{i,n-1}``."""
    k = kappa_array(kappa, graph.n)
    _check_dims(graph, theta, k)
    d1, _ = _derivative_matrices(graph, theta, k)
    return np.concatenate([d1.sum(axis=1), d1.sum(axis=0)])


def build_h_matrix(u: CurvatureVector) -> HMatrix:
    bad = np.flatnonzero(~(u.u > 0))
    if bad.size:
        raise CurvatureError(bad[0], u.u[bad[0]])
    return HMatrix(1.0 / u.free, 1.0 / u.u2n)


def _one_step(theta_check, d1, d2):
    n = theta_check.n
    u = _curvatures_from(d2)
    h = build_h_matrix(u)
    g_alpha = d1.sum(axis=1)
    g_beta = d1.sum(axis=0)
    # g_beta[n-1] equals sum(g_alpha) - sum(g_beta[:n-1])
    shift = g_beta[n - 1] * h.u2n_inverse
    alpha = theta_check.alpha + h.diag_inverse_u[:n] * g_alpha + shift
    beta = theta_check.beta[:-1] + h.diag_inverse_u[n:] * g_beta[: n - 1] - shift
    return Theta(alpha, np.append(beta, 0.0))


def one_step(graph: SignedAdjacency, theta_check: Theta, kappa) -> Theta:
    """Single update ``theta_check + H * grad l(theta_check)``; ``beta_{n-1}`` stays 0."""
    k = kappa_array(kappa, graph.n)
    _check_dims(graph, theta_check, k)
    d1, d2 = _derivative_matrices(graph, theta_check, k)
    return _one_step(theta_check, d1, d2)


def fit_estimates(graph: SignedAdjacency, kappa, config: SolverConfig | None = None,
                  initial: Theta | None = None):
    """``(theta_check, theta_hat)`` without the curvature bookkeeping of :func:`fit`."""
    k = kappa_array(kappa, graph.n)
    theta_check, _, _ = _newton(graph, k, config or SolverConfig(), initial)
    d1, d2 = _derivative_matrices(graph, theta_check, k)
    return theta_check, _one_step(theta_check, d1, d2)


def fit(graph: SignedAdjacency, kappa, config: SolverConfig | None = None,
        initial: Theta | None = None) -> FitResult:
    """Initial estimate, one-step estimate and curvatures at both."""
    k = kappa_array(kappa, graph.n)
    config = config or SolverConfig()
    theta_check, iterations, norm = _newton(graph, k, config, initial)
    d1, d2 = _derivative_matrices(graph, theta_check, k)
    theta_hat = _one_step(theta_check, d1, d2)
    u_check = _curvatures_from(d2)
    _, d2_hat = _derivative_matrices(graph, theta_hat, k)
    return FitResult(
        theta_check=theta_check,
        theta_hat=theta_hat,
        u_hat=_curvatures_from(d2_hat),
        u_check=u_check,
        kappa=k.copy(),
        newton_iterations=iterations,
        final_residual_inf_norm=norm,
    )


# --------------------------------------------------------------------------
# Population quantities
# --------------------------------------------------------------------------


def population_quantities(theta_star: Theta, kappa):
    """Expected curvature ``u``, derivative scale ``v`` and variance sums ``w``.

    Each is a length-2n vector: entries ``0..n-1`` for out-status, ``n..2n-1``
    for in-status including the pinned last node.  ``u[2n-1]`` is set through
    ``sum(u[:n]) - sum(u[n:2n-1])``.
    """
    n = theta_star.n
    k = kappa_array(kappa, n)
    m = theta_star.predictor()
    kk = np.broadcast_to(k[:, None], m.shape)
    s, q = expit(m), expit(-m)
    mask = ~np.eye(n, dtype=bool)
    cu = np.where(mask, expected_neg_curvature(m, kk), 0.0)
    cv = np.where(mask, (1.0 + kk) * s * q, 0.0)
    cw = np.where(mask, edge_variance(m, kk), 0.0)

    def rows_cols(c):
        return np.concatenate([c.sum(axis=1), c.sum(axis=0)])

    u, v, w = rows_cols(cu), rows_cols(cv), rows_cols(cw)
    u[-1] = u[:n].sum() - u[n:2 * n - 1].sum()
    return u, v, w


def asymptotic_variances(theta_star: Theta, kappa):
    """Per-coordinate asymptotic variances of the initial and one-step estimates.

    Returns ``(avar_check, avar_hat)``, both of length ``2n - 1``:
    ``w_i / v_i^2 + w_2n / v_2n^2`` and ``1 / u_i + 1 / u_2n``.
    """
    u, v, w = population_quantities(theta_star, kappa)
    avar_check = w[:-1] / v[:-1] ** 2 + w[-1] / v[-1] ** 2
    avar_hat = 1.0 / u[:-1] + 1.0 / u[-1]
    return avar_check, avar_hat
