import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr, ndtri

from dtdcva.copula import (FactorLoadings, assemble_draw, build_structure, conditional_scores, default_region,
                           load_correlation, sample_case_I, sample_case_II, sample_unconditional)
from dtdcva.errors import DomainError, NotPositiveDefiniteError, ValidationError
from dtdcva.rng import CounterStream


def one_factor(a1, a2, refs=()):
    a = np.array([[a1], [a2]] + [[r] for r in refs])
    names = ("C", "I") + tuple(f"R{i}" for i in range(len(refs)))
    return build_structure(np.eye(1), FactorLoadings(names, a))


def test_single_factor_block():
    rho = 0.3
    s = one_factor(math.sqrt(rho), math.sqrt(rho))
    assert s.sigma[0, 1] == pytest.approx(rho, rel=1e-15)
    assert s.L21 == pytest.approx(rho) and s.L22 == pytest.approx(math.sqrt(1 - rho * rho))


def test_zero_loadings_block_diagonal():
    s = build_structure(np.array([[1.0, 0.4], [0.4, 1.0]]), FactorLoadings(("C", "I", "R"), np.zeros((3, 2))))
    assert np.array_equal(s.sigma[:2], np.eye(4)[:2])
    assert s.L21 == 0.0


def test_random_structure_reconstructs(rng):
    for _ in range(20):
        k = int(rng.integers(1, 5))
        A = rng.standard_normal((k, k))
        sm = A @ A.T + np.eye(k)
        d = np.sqrt(np.diag(sm))
        sm = sm / np.outer(d, d)
        a = rng.uniform(-1, 1, (4, k))
        a /= np.maximum(1.0, 1.05 * np.sqrt(np.einsum("ij,jk,ik->i", a, sm, a)))[:, None]
        a /= np.maximum(1.0, 1.05 * np.linalg.norm(a, axis=1))[:, None]
        with pytest.warns(UserWarning) if k > 1 else _nothing():
            s = build_structure(sm, FactorLoadings(("C", "I", "R1", "R2"), a))
        assert np.max(np.abs(s.chol.reconstruct() - s.sigma)) < 1e-12


class _nothing:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_structure_validation():
    with pytest.raises(ValidationError, match="exceeds 1"):
        one_factor(1.2, 0.3)
    with pytest.raises(ValidationError, match="factors"):
        build_structure(np.eye(2), FactorLoadings(("C", "I"), np.ones((2, 1)) * 0.1))
    with pytest.raises(NotPositiveDefiniteError):
        build_structure(np.array([[1.0, 2.0], [2.0, 1.0]]), FactorLoadings(("C", "I"), np.zeros((2, 2))))


def test_unconditional_moments():
    s = one_factor(0.6, 0.5, refs=(0.7,))
    n = 1_000_000
    d = sample_unconditional(s, np.random.default_rng(77), size=n)
    prod = d.y1 * d.y2
    assert abs(prod.mean() - s.L21) <= 3 * prod.std(ddof=1) / math.sqrt(n)
    for y in (d.y1, d.y2, d.y_refs[:, 0]):
        assert abs(y.mean()) <= 3 / math.sqrt(n)
        assert abs(y.var() - 1.0) <= 3 * math.sqrt(2.0 / n)
    zero = assemble_draw(s, np.zeros((3, 3)), np.zeros((3, 1)))
    assert not np.any(zero.y1) and not np.any(zero.y2) and not np.any(zero.y_refs)


def _fixed(u):
    u = np.atleast_2d(u)
    return lambda attempt, idx: u[idx]


def test_case_I_reductions():
    p1, p2 = 0.99, 0.98
    q1, q2 = -ndtri(0.5 * (1 - p1)), -ndtri(0.5 * (1 - p2))
    u = np.array([[0.3, 0.7, 0.5], [1.0 - 1e-16, 0.2, 0.5]])
    K1, K2 = conditional_scores(1, 0.0, np.full(2, q1), 1 - p1, q2, 1 - p2, _fixed(u))
    assert K1[0] == pytest.approx(-ndtri(0.3 * (1 - p1)), rel=1e-14)
    assert K2 == pytest.approx(ndtri(u[:, 1] * p2), rel=1e-14)
    assert K1[1] == pytest.approx(ndtri(p1), rel=1e-9)


def test_case_II_reductions():
    p1, p2 = 0.99, 0.98
    q1, q2 = -ndtri(0.5 * (1 - p1)), -ndtri(0.5 * (1 - p2))
    u = np.array([[0.3, 0.7, 0.5], [0.4, 1e-300, 0.5]])
    K1, K2 = conditional_scores(2, 0.0, np.full(2, q1), 1 - p1, q2, 1 - p2, _fixed(u))
    assert K2[0] == pytest.approx(-ndtri(0.3 * (1 - p2)), rel=1e-14)
    assert K1 == pytest.approx(ndtri(u[:, 1] * p1), rel=1e-14)
    # tiny survivor uniform gives a large negative but finite score
    assert np.isfinite(K1[1]) and K1[1] < -30.0


@pytest.mark.parametrize("L21", [-0.6, 0.0, 0.45, 0.9])
@pytest.mark.parametrize("q", [(2.5, 3.0), (9.0, 11.0), (12.0, 2.0)])
def test_case_regions_hold(L21, q):
    q1, q2 = q
    pd1, pd2 = 2 * ndtr(-q1), 2 * ndtr(-q2)
    L22 = math.sqrt(1 - L21 * L21)
    blocks = lambda attempt, idx: CounterStream(5, attempt, 0).random((idx.size, 3))
    n = 20000
    K1, K2 = conditional_scores(1, L21, np.full(n, q1), pd1, q2, pd2, blocks)
    y1, y2 = K1, L21 * K1 + L22 * K2
    assert np.all(default_region(y1, q1, pd1)) and not np.any(default_region(y2, q2, pd2))
    K1, K2 = conditional_scores(2, L21, np.full(n, q1), pd1, q2, pd2, blocks)
    y1, y2 = K1, L21 * K1 + L22 * K2
    assert not np.any(default_region(y1, q1, pd1)) and np.all(default_region(y2, q2, pd2))


def _rejection_oracle(L21, p1, p2, n, case, seed):
    r = np.random.default_rng(seed)
    out = []
    t1, t2 = ndtri(p1), ndtri(p2)
    got = 0
    while got < n:
        z = r.standard_normal((2_000_000, 2))
        y1 = z[:, 0]
        y2 = L21 * z[:, 0] + math.sqrt(1 - L21 * L21) * z[:, 1]
        keep = (y1 >= t1) & (y2 < t2) if case == 1 else (y1 < t1) & (y2 >= t2)
        out.append(np.column_stack([y1[keep], y2[keep]]))
        got += int(keep.sum())
    return np.concatenate(out)[:n]


@pytest.mark.parametrize("case", [1, 2])
def test_case_distribution_matches_rejection(case):
    L21, p1, p2 = 0.5, 0.99, 0.98
    if case == 2:
        p1, p2 = 0.98, 0.99
    s = one_factor(math.sqrt(L21), math.sqrt(L21))
    n = 100_000
    sampler = sample_case_I if case == 1 else sample_case_II
    K1, K2 = sampler(s, p1, p2, rng=np.random.default_rng(101), size=n)
    y = np.column_stack([K1, s.L21 * K1 + s.L22 * K2])
    ref = _rejection_oracle(s.L21, p1, p2, n, case, 202)
    for f in (lambda v: v[:, 0], lambda v: v[:, 1], lambda v: v[:, 0] - v[:, 1]):
        assert stats.ks_2samp(f(y), f(ref)).pvalue > 0.01


def test_case_domain():
    s = one_factor(0.5, 0.5)
    with pytest.raises(DomainError):
        sample_case_I(s, 1.0, 0.9, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        conditional_scores(1, 1.0, 3.0, 0.01, 3.0, 0.01, _fixed([0.5, 0.5, 0.5]))


def test_load_correlation(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("[index_correlation]\n1.0 0.2\n0.2 1.0\n\n[loadings]\nname_id, a_1, a_2\n"
                 "REF, 0.3, 0.1\nINV, 0.2, 0.2\nCPTY, 0.5, 0.0\n")
    sm, lo = load_correlation(p, "CPTY", "INV")
    assert lo.names == ("CPTY", "INV", "REF")
    assert np.allclose(lo.a[0], [0.5, 0.0]) and sm.shape == (2, 2)
    with pytest.raises(ValidationError, match="no loadings"):
        load_correlation(p, "CPTY", "OTHER")
