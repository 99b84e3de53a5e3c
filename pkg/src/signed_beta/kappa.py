"""Estimation of the negative-edge sparsity pattern.

Nodes are split into a low and a high negative-sending class by thresholding
the fraction of ``-1`` outcomes in their row.  The high-class level is then
estimated by a box-restricted maximum likelihood on the subnetwork induced by
the high class, computed as a one-dimensional profile over kappa.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError, SignedBetaError
from .estimation import SolverConfig, fit_estimates
from .model import KappaVector, SignedAdjacency, Theta, network_loglik

__all__ = [
    "KappaEstimate",
    "default_threshold",
    "classify_negative_senders",
    "profile_objective",
    "estimate_kappa01",
    "estimate_kappa",
]

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class KappaEstimate:
    class_high: frozenset
    kappa01_hat: float
    kappa00_value: float
    zeta: np.ndarray = field(repr=False)
    threshold_used: float
    grid: np.ndarray = field(default=None, repr=False)
    profile: np.ndarray = field(default=None, repr=False)

    def kappa_vector(self, n: int) -> KappaVector:
        high = np.zeros(n, dtype=bool)
        high[list(self.class_high)] = True
        return KappaVector.from_classes(high, self.kappa00_value, self.kappa01_hat)


def default_threshold(n: int) -> float:
    """Default class threshold on the negative-edge fraction, ``(2/3) log(n) / n``.

    Low-class nodes send ``O(log n)`` negative edges at most while high-class
    nodes send ``Theta(n)``; at n = 600 this cut sits between 4 and 5 edges.
    """
    return (2.0 / 3.0) * math.log(n) / n


def classify_negative_senders(graph: SignedAdjacency, xi: float | None = None):
    """Return ``(high_set, zeta)`` where ``zeta_i`` is the fraction of -1 outcomes
    sent by node ``i`` (divided by ``n``) and ``high_set = {i : zeta_i > xi}``."""
    if xi is None:
        xi = default_threshold(graph.n)
    if not 0.0 < xi < 1.0:
        raise DomainError(f"threshold xi must lie in (0, 1), got {xi!r}")
    zeta = np.bincount(graph.neg[:, 0], minlength=graph.n) / graph.n
    high = frozenset(np.flatnonzero(zeta > xi).tolist())
    return high, zeta


def _inner_fit(sub, kappa, tau, config, initial):
    n1 = sub.n
    theta_check, theta_hat = fit_estimates(sub, np.full(n1, kappa), config, initial)
    bound = tau * math.log(n1)
    return theta_check, Theta.from_free(np.clip(theta_hat.free, -bound, bound))


def profile_objective(sub: SignedAdjacency, kappa: float, tau: float = 1.0,
                      config: SolverConfig | None = None,
                      initial: Theta | None = None):
    """Profiled log-likelihood of the subnetwork at a common ``kappa``.

    Returns ``(value, theta_check)``; the inner parameters are the one-step
    estimate at ``kappa`` clipped to the box ``|theta| <= tau log n1``.
    """
    theta_check, theta = _inner_fit(sub, kappa, tau, config, initial)
    return network_loglik(sub, theta, np.full(sub.n, kappa)), theta_check


def estimate_kappa01(graph: SignedAdjacency, high_set, bounds=(0.01, 0.99),
                     tau: float = 1.0, grid_size: int = 50,
                     kappa00: float | None = None, refine: bool = True,
                     config: SolverConfig | None = None,
                     zeta=None, threshold=None) -> KappaEstimate:
    """Restricted MLE of the high-class sparsity level.

    Parameters
    ----------
    graph : SignedAdjacency
        Full network; only the subnetwork induced by ``high_set`` is read.
    high_set : iterable of int
        Nodes assigned to the high class (at least three).
    bounds : (float, float)
        ``[gamma, 1 - gamma]`` search interval for kappa, ``0 < gamma < 1/2``.
    tau : float
        Box constant for the inner parameters, ``|theta| <= tau log n1``.
    grid_size : int
        Number of uniform profile points; the best one is refined by a
        golden-section search over its two neighbouring cells.
    kappa00 : float, optional
        Low-class level recorded on the result; defaults to ``log n / n``.

    Grid points whose inner fit fails are skipped with a warning.
    """
    lo, hi = map(float, bounds)
    if not (0.0 < lo < 0.5 and lo <= hi < 1.0):
        raise DomainError(f"invalid bounds {bounds!r}; need 0 < gamma < 1/2")
    if tau < 1.0 / 40.0:
        raise DomainError(f"tau must be at least 1/40, got {tau}")
    nodes = sorted(int(i) for i in high_set)
    if len(nodes) < 3:
        raise InsufficientDataError(
            f"high-kappa class has {len(nodes)} nodes; need at least 3")
    sub = graph.subgraph(nodes)
    config = config or SolverConfig()

    grid = np.linspace(lo, hi, grid_size) if grid_size > 1 else np.array([lo])
    values = np.full(grid.size, -np.inf)
    warm = None
    for idx, kap in enumerate(grid):
        try:
            values[idx], warm = profile_objective(sub, kap, tau, config, warm)
        except SignedBetaError as exc:
            warnings.warn(f"kappa profile point {kap:.4g} skipped: {exc}",
                          RuntimeWarning, stacklevel=2)
            warm = None
    if not np.isfinite(values).any():
        raise InsufficientDataError("inner fit failed at every kappa grid point")
    best = int(np.argmax(values))  # first maximum: ties go to the smaller kappa
    kappa_hat, best_value = float(grid[best]), float(values[best])

    if refine and grid.size > 1:
        a = float(grid[max(best - 1, 0)])
        b = float(grid[min(best + 1, grid.size - 1)])
        start = profile_objective(sub, kappa_hat, tau, config)[1]
        k_ref, v_ref = _golden_max(sub, a, b, tau, config, start)
        if v_ref > best_value:
            kappa_hat, best_value = k_ref, v_ref

    n = graph.n
    return KappaEstimate(
        class_high=frozenset(nodes),
        kappa01_hat=kappa_hat,
        kappa00_value=math.log(n) / n if kappa00 is None else float(kappa00),
        zeta=zeta if zeta is not None else np.bincount(graph.neg[:, 0], minlength=n) / n,
        threshold_used=float("nan") if threshold is None else float(threshold),
        grid=grid,
        profile=values,
    )


def _golden_max(sub, a, b, tau, config, start=None, tol=1e-5):
    def f(k):
        try:
            return profile_objective(sub, k, tau, config, start)[0]
        except SignedBetaError:
            return -np.inf

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def estimate_kappa(graph: SignedAdjacency, xi: float | None = None,
                   gamma: float = 0.01, tau: float = 1.0, grid_size: int = 50,
                   kappa00: float | None = None,
                   config: SolverConfig | None = None) -> KappaEstimate:
    """Classify nodes by their negative-edge fraction, then estimate kappa01."""
    if xi is None:
        xi = default_threshold(graph.n)
    high, zeta = classify_negative_senders(graph, xi)
    return estimate_kappa01(graph, high, (gamma, 1.0 - gamma), tau, grid_size,
                            kappa00, config=config, zeta=zeta, threshold=xi)
