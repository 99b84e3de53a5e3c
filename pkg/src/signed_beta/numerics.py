"""Scalar and vector numerics shared by the estimation and inference code.

The standard normal CDF and quantile are thin wrappers over
``scipy.special.ndtr`` / ``ndtri`` (Cephes), whose double-precision error is
far below the 1e-12 absolute error budget used throughout the package.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import special

from .errors import DomainError, SingularSystemError

__all__ = [
    "std_normal_cdf",
    "std_normal_quantile",
    "RandomStream",
    "DenseSystem",
    "solve_dense",
]

PIVOT_RTOL = 1e-12


def _as_finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _unwrap(arr):
    return float(arr) if arr.ndim == 0 else arr


def std_normal_cdf(x):
    """Standard normal CDF, Phi(x). Accepts scalars or arrays."""
    return _unwrap(special.ndtr(_as_finite(x, "x")))


def std_normal_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return _unwrap(special.ndtr(-_as_finite(x, "x")))


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1)."""
    arr = _as_finite(p, "p")
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    return _unwrap(special.ndtri(arr))


class RandomStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator; the stream id enters the
    key through ``SeedSequence.spawn_key``, so replication ``k`` draws the same
    numbers regardless of which worker runs it or in what order.  Generator
    methods (``random``, ``normal``, ``choice``, ...) are available directly
    on the stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if stream_id < 0:
            raise DomainError(f"stream_id must be non-negative, got {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        seq = np.random.SeedSequence(seed, spawn_key=(stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def __getattr__(self, name):
        # only reached for attributes not defined on the stream itself
        return getattr(self.__dict__["generator"], name)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class DenseSystem:
    """Square linear system ``matrix @ x = rhs``."""

    matrix: np.ndarray
    rhs: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.rhs, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"matrix must be square, got shape {a.shape}")
        if b.shape != (a.shape[0],):
            raise DomainError(
                f"rhs length {b.shape} does not match matrix dimension {a.shape[0]}"
            )
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "rhs", b)


def solve_dense(system: DenseSystem) -> np.ndarray:
    """Solve a dense system by LU factorization with partial pivoting.

    Raises
    ------
    SingularSystemError
        If a pivot of ``U`` falls below ``1e-12 * ||A||_inf``.
    """
    a, b = system.matrix, system.rhs
    if a.shape[0] == 0:
        return np.empty(0)
    norm = np.abs(a).sum(axis=1).max()
    threshold = PIVOT_RTOL * norm
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(pivots < threshold) if norm > 0 else np.array([0])
    if bad.size:
        k = bad[0]
        raise SingularSystemError(k, np.diag(lu)[k] if norm > 0 else 0.0, threshold)
    return scipy.linalg.lu_solve((lu, piv), b)
