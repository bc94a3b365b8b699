"""Special functions and small linear-algebra helpers.

The normal CDF and its inverse come from ``scipy.special`` (Cephes ``ndtr``
and ``ndtri``), which are accurate to a few ulps well into the tails.  The
bivariate normal CDF and the deep-tail inverse share their implementation with
the simulation kernels so that the engine and the library agree exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .errors import DomainError, NotPositiveDefiniteError

TAIL_SWITCH = _kernels.TAIL_SWITCH


def norm_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def norm_inv(p):
    """Inverse standard normal CDF; ``p`` must lie strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("norm_inv requires 0 < p < 1")
    return ndtri(p)


def tail_inv_asymptotic(q, arg):
    """Asymptotic deep-tail inverse normal, sqrt(a - (1 - 1/a) ln a).

    Here ``a = q**2 - 2 ln(arg)``.  The magnitude is returned; callers attach
    the sign.  See :func:`restriction_arg` for the argument each use expects.
    """
    q = np.asarray(q, dtype=float)
    arg = np.asarray(arg, dtype=float)
    if np.any(q < TAIL_SWITCH):
        raise DomainError(f"asymptotic inverse is only used for q >= {TAIL_SWITCH:g}")
    if np.any(~(arg > 0.0)):
        raise DomainError("log argument of the tail asymptotic must be positive")
    out = _kernels.tail_kernel(q, arg)
    return out if out.ndim else float(out)


def restriction_arg(kind: str, q, u=1.0):
    """Log argument for the tail restrictions.

    ``a``: 2u/q (default score of a name with q >= 8);
    ``b``, ``d``, ``f``, ``g``: 2/q (survival threshold N^-1(p_S));
    ``c``, ``e``: u/|z| (conditional survivor score, with q = |z|).
    """
    q = np.abs(np.asarray(q, dtype=float))
    if kind == "a":
        return 2.0 * np.asarray(u, dtype=float) / q
    if kind in ("b", "d", "f", "g"):
        return 2.0 / q
    if kind in ("c", "e"):
        return np.asarray(u, dtype=float) / q
    raise ValueError(f"unknown restriction {kind!r}")


def bivar_norm_cdf(a, b, rho):
    """P(X <= a, Y <= b) for a standard bivariate normal with correlation rho."""
    r = np.asarray(rho, dtype=float)
    if np.any(np.abs(r) > 1.0) or np.any(np.isnan(r)):
        raise DomainError("correlation must lie in [-1, 1]")
    out = _kernels.bvn_lower(a, b, r)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LowerTriangular:
    """Lower-triangular factor stored row-major as a dense ``n x n`` array."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float).reshape(self.n, self.n)
        if np.any(np.triu(e, 1) != 0.0):
            raise ValueError("strictly upper entries must be zero")
        if np.any(np.diag(e) <= 0.0):
            raise ValueError("diagonal entries must be positive")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    def __getitem__(self, idx):
        return self.entries[idx]

    def reconstruct(self) -> np.ndarray:
        return self.entries @ self.entries.T


def cholesky(sigma) -> LowerTriangular:
    """Cholesky factor of a symmetric positive-definite matrix.

    Raises :class:`NotPositiveDefiniteError` carrying the failing pivot.
    """
    a = np.array(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("cholesky requires a square matrix")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise DomainError("cholesky requires a symmetric matrix")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            raise NotPositiveDefiniteError(j, float(d))
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return LowerTriangular(n, L)
