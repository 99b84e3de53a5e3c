"""Signed beta-model for directed signed networks.

Each ordered pair ``(i, j)`` carries an edge ``y_ij`` in ``{-1, 0, 1}`` driven
by the sender's out-status ``alpha_i``, the receiver's in-status ``beta_j`` and
the sender's negative-edge sparsity ``kappa_i``.  The package fits the
statuses by moment equations plus a one-step likelihood correction, estimates
the sparsity pattern, and ranks nodes with studentized pairwise comparisons.
"""

from .errors import SignedBetaError
from .estimation import FitResult, SolverConfig, fit
from .inference import Facet, bh_multiple_comparison, pairwise_interval, rank_report
from .kappa import estimate_kappa
from .model import KappaVector, SignedAdjacency, Theta, sample_network
from .numerics import RandomStream

__version__ = "0.1.0"

__all__ = [
    "SignedBetaError",
    "FitResult",
    "SolverConfig",
    "fit",
    "Facet",
    "bh_multiple_comparison",
    "pairwise_interval",
    "rank_report",
    "estimate_kappa",
    "KappaVector",
    "SignedAdjacency",
    "Theta",
    "sample_network",
    "RandomStream",
]
