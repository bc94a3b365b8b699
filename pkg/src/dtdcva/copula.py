"""Gaussian factor copula over counterparty, investor, indices and references.

The counterparty (row 0) and investor (row 1) enter the Cholesky-factored
block matrix directly; reference names load on the market indices plus an
idiosyncratic shock.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .errors import DomainError, ValidationError
from .market_data import read_table
from .mathkit import LowerTriangular, cholesky

MAX_ATTEMPTS = 10_000


@dataclass(frozen=True)
class FactorLoadings:
    """Index loadings a_k, one row per name; rows 0 and 1 are counterparty and investor."""

    names: tuple
    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        names = tuple(self.names)
        if a.shape[0] != len(names):
            raise ValidationError("one loadings row per name is required")
        if len(names) < 2:
            raise ValidationError("counterparty and investor loadings are required")
        if len(set(names)) != len(names):
            raise ValidationError("duplicate name in loadings")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "a", a)

    @property
    def n_factors(self) -> int:
        return self.a.shape[1]

    @property
    def references(self) -> tuple:
        return self.names[2:]


@dataclass(frozen=True)
class CorrelationStructure:
    sigma_M: np.ndarray
    loadings: FactorLoadings
    sigma: np.ndarray
    chol: LowerTriangular

    @property
    def L21(self) -> float:
        return float(self.chol[1, 0])

    @property
    def L22(self) -> float:
        return float(self.chol[1, 1])

    @property
    def n_factors(self) -> int:
        return self.sigma_M.shape[0]

    @property
    def ref_loadings(self) -> np.ndarray:
        return self.loadings.a[2:]

    @property
    def ref_idio(self) -> np.ndarray:
        """sqrt(1 - a_k'a_k) for the reference names."""
        a = self.ref_loadings
        return np.sqrt(np.maximum(1.0 - np.sum(a * a, axis=1), 0.0))


def build_structure(sigma_M, loadings: FactorLoadings) -> CorrelationStructure:
    """Assemble the (s+2) x (s+2) block correlation matrix and factor it."""
    sm = np.atleast_2d(np.asarray(sigma_M, dtype=float))
    s = sm.shape[0]
    if sm.shape != (s, s) or not np.allclose(sm, sm.T, rtol=0.0, atol=1e-12):
        raise ValidationError("index correlation matrix must be square and symmetric")
    if not np.allclose(np.diag(sm), 1.0, rtol=0.0, atol=1e-12):
        raise ValidationError("index correlation matrix must have a unit diagonal")
    if loadings.n_factors != s:
        raise ValidationError(f"loadings have {loadings.n_factors} factors, index matrix has {s}")
    cholesky(sm)
    a = loadings.a
    for name, row in zip(loadings.names, a):
        v_m = float(row @ sm @ row)
        v_p = float(row @ row)
        if v_m > 1.0 + 1e-12:
            raise ValidationError(f"name {name!r}: factor variance a'Sigma_M a = {v_m:.6g} exceeds 1")
        if v_p > 1.0 + 1e-12:
            raise ValidationError(f"name {name!r}: a'a = {v_p:.6g} exceeds 1, idiosyncratic weight undefined")
    ref = a[2:]
    if ref.size and not np.allclose(np.einsum("ij,jk,ik->i", ref, sm, ref), np.sum(ref * ref, axis=1), atol=1e-12):
        warnings.warn(
            "correlated indices: reference-name variance a'Sigma_M a + 1 - a'a differs from 1",
            stacklevel=2,
        )
    sigma = np.eye(s + 2)
    sigma[0, 1] = sigma[1, 0] = float(a[0] @ sm @ a[1])
    sigma[0, 2:] = sigma[2:, 0] = a[0] @ sm
    sigma[1, 2:] = sigma[2:, 1] = a[1] @ sm
    sigma[2:, 2:] = sm
    return CorrelationStructure(sm, loadings, sigma, cholesky(sigma))


@dataclass
class JointDraw:
    """Copula variables for a batch of draws (leading axis = draw)."""

    y1: np.ndarray
    y2: np.ndarray
    M: np.ndarray
    eps: np.ndarray
    y_refs: np.ndarray


def assemble_draw(struct: CorrelationStructure, K, eps) -> JointDraw:
    """y1 = K1, y2 = L21 K1 + L22 K2, M = L[2:] K, y_k = a_k'M + sqrt(1 - a_k'a_k) eps_k."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    L = struct.chol.matrix
    y1 = K[:, 0].copy()
    y2 = L[1, 0] * K[:, 0] + L[1, 1] * K[:, 1]
    M = K @ L[2:].T
    y_refs = M @ struct.ref_loadings.T + eps * struct.ref_idio
    return JointDraw(y1, y2, M, eps, y_refs)


def sample_unconditional(struct: CorrelationStructure, rng, size: int = 1) -> JointDraw:
    """Unconditional joint draw; ``rng`` needs ``standard_normal(shape)``."""
    K = rng.standard_normal((size, struct.n_factors + 2))
    eps = rng.standard_normal((size, len(struct.loadings.references)))
    return assemble_draw(struct, K, eps)


# --------------------------------------------------------------------------
# Conditional draws for the unilateral cases
# --------------------------------------------------------------------------

def conditional_scores(case: int, L21: float, q1, pd1, q2, pd2, draw_uniforms, max_attempts: int = MAX_ATTEMPTS):
    """(K1, K2) conditioned on the case-I or case-II region.

    Case I: counterparty score in its default region, investor surviving;
    case II mirrored.  ``draw_uniforms(attempt, idx)`` must return an
    ``(len(idx), 3)`` block of open-interval uniforms for the pending draws.
    Proposals that fail the acceptance test are redrawn from the next block.
    """
    q1, pd1, q2, pd2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in np.broadcast_arrays(q1, pd1, q2, pd2))
    n = q1.size
    if not abs(L21) < 1.0:
        raise DomainError("conditional sampling needs |L21| < 1")
    L22 = math.sqrt(1.0 - L21 * L21)
    if case == 1:
        qd, pdd, qs, pds = q1, pd1, q2, pd2
    elif case == 2:
        qd, pdd, qs, pds = q2, pd2, q1, pd1
    else:
        raise ValueError("case must be 1 or 2")
    y_d = np.empty(n)
    y_s = np.empty(n)
    pending = np.arange(n)
    for attempt in range(max_attempts):
        if pending.size == 0:
            break
        u = draw_uniforms(attempt, pending)
        yd, ys, ok = _kernels.conditional_pair(qd[pending], pdd[pending], qs[pending], pds[pending], L21,
                                               u[:, 0], u[:, 1], u[:, 2])
        y_d[pending[ok]] = yd[ok]
        y_s[pending[ok]] = ys[ok]
        pending = pending[~ok]
    if pending.size:
        raise RuntimeError(f"{pending.size} conditional draws not accepted after {max_attempts} attempts")
    # keep both scores strictly inside their regions after rounding
    thr_d, thr_s = case_thresholds(qd, pdd), case_thresholds(qs, pds)
    y_s = np.minimum(y_s, np.nextafter(thr_s, -np.inf))
    if case == 1:
        K1, K2 = y_d, (y_s - L21 * y_d) / L22
        _snap(K1, K2, L21, L22, lambda y: y >= thr_s, -np.inf)
    else:
        K1, K2 = y_s, (y_d - L21 * y_s) / L22
        _snap(K1, K2, L21, L22, lambda y: y < thr_d, np.inf)
    return K1, K2


def _snap(K1, K2, L21, L22, outside, direction, max_steps: int = 8):
    """Nudge K2 by ulps until L21 K1 + L22 K2 leaves the ``outside`` set."""
    for _ in range(max_steps):
        bad = outside(L21 * K1 + L22 * K2)
        if not np.any(bad):
            return
        K2[bad] = np.nextafter(K2[bad], direction)
    raise RuntimeError("conditional score could not be placed inside its region")


def _rng_blocks(rng):
    return lambda attempt, idx: rng.random((idx.size, 3))


def _case_inputs(p_S1, p_S2, q1, q2):
    p_S1, p_S2 = np.asarray(p_S1, dtype=float), np.asarray(p_S2, dtype=float)
    if np.any(~((p_S1 > 0.0) & (p_S1 < 1.0))) or np.any(~((p_S2 > 0.0) & (p_S2 < 1.0))):
        raise DomainError("survival probabilities must lie in (0, 1)")
    if q1 is None:
        q1 = -ndtri(0.5 * (1.0 - p_S1))
    if q2 is None:
        q2 = -ndtri(0.5 * (1.0 - p_S2))
    return q1, 1.0 - p_S1, q2, 1.0 - p_S2


def sample_case_I(struct: CorrelationStructure, p_S1, p_S2, q1=None, q2=None, rng=None, size: int = 1):
    """(eps1, eps2) = (K1, K2) given counterparty default and investor survival."""
    q1, pd1, q2, pd2 = _case_inputs(p_S1, p_S2, q1, q2)
    q1, pd1, q2, pd2 = np.broadcast_arrays(q1, pd1, q2, pd2, np.empty(size))[:4]
    return conditional_scores(1, struct.L21, q1, pd1, q2, pd2, _rng_blocks(rng))


def sample_case_II(struct: CorrelationStructure, p_S1, p_S2, q1=None, q2=None, rng=None, size: int = 1):
    """(eps1, eps2) = (K1, K2) given counterparty survival and investor default."""
    q1, pd1, q2, pd2 = _case_inputs(p_S1, p_S2, q1, q2)
    q1, pd1, q2, pd2 = np.broadcast_arrays(q1, pd1, q2, pd2, np.empty(size))[:4]
    return conditional_scores(2, struct.L21, q1, pd1, q2, pd2, _rng_blocks(rng))


def case_thresholds(q, pd):
    """N^-1(p_S) with the asymptotic substitution for q >= 8."""
    return _kernels.survival_threshold(q, pd)


def default_region(y, q, pd):
    """True where a score lies in the default region {N(y) >= p_S}."""
    return np.asarray(y) >= case_thresholds(q, pd)


# --------------------------------------------------------------------------
# Input file
# --------------------------------------------------------------------------

def load_correlation(path, counterparty: str, investor: str):
    """Read index correlations and loadings.

    The file has an ``[index_correlation]`` section (a square matrix, one row
    per line) followed by a ``[loadings]`` section with rows
    ``name_id, a_1, ..., a_s``.  Names are reordered so that the counterparty
    and investor come first.
    """
    from pathlib import Path

    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing input file: {path}")
    section = None
    corr, rows = [], {}
    order = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        fields = [f for f in line.replace(",", " ").split()]
        try:
            if section == "index_correlation":
                corr.append([float(f) for f in fields])
            elif section == "loadings":
                if fields[0].lower() in ("name_id", "name"):
                    continue
                rows[fields[0]] = [float(f) for f in fields[1:]]
                order.append(fields[0])
            else:
                raise ValidationError(f"{path}: data outside a section")
        except ValueError as exc:
            raise ValidationError(f"{path}: bad number ({exc})") from None
    if not corr or not rows:
        raise ValidationError(f"{path}: both [index_correlation] and [loadings] sections are required")
    for who in (counterparty, investor):
        if who not in rows:
            raise ValidationError(f"{path}: no loadings for {who!r}")
    names = [counterparty, investor] + [n for n in order if n not in (counterparty, investor)]
    a = np.array([rows[n] for n in names])
    return np.array(corr), FactorLoadings(tuple(names), a)
