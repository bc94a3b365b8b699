import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtdcva.errors import DomainError, NotPositiveDefiniteError
from dtdcva.mathkit import (bivar_norm_cdf, cholesky, norm_cdf, norm_inv, restriction_arg,
                            tail_inv_asymptotic)
from oracles import ncdf, upper_tail_inv


def test_norm_cdf_symmetry_and_saturation():
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(40.0) == 1.0


def test_norm_cdf_matches_extended_precision():
    xs = [-1.0, -5.0, -12.0, -30.0, 0.3, 2.5]
    for x in xs:
        ref = float(ncdf(x))
        assert norm_cdf(x) == pytest.approx(ref, rel=1e-14)
    assert norm_cdf(-1.0) == pytest.approx(0.15865525393145705, rel=1e-15)


def test_norm_inv_identities():
    assert norm_inv(0.5) == 0.0
    assert abs(norm_inv(norm_cdf(-2.0)) + 2.0) < 1e-10
    assert abs(norm_inv(0.15865525393145705) + 1.0) < 1e-9


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_norm_inv_domain(p):
    with pytest.raises(DomainError):
        norm_inv(p)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-37.0, max_value=3.0))
def test_norm_round_trip(x):
    assert norm_inv(norm_cdf(x)) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_tail_restriction_a_and_b():
    # (a): default score -N^-1(u (1 - p_S)) with 1 - p_S = 2 N(-q)
    q, u = 8.0, 1.0
    exact = upper_tail_inv(mp.log(2 * u * ncdf(-q)))
    got = tail_inv_asymptotic(q, restriction_arg("a", q, u))
    assert got == pytest.approx(float(exact), rel=1e-3)
    # (b): N^-1(p_S) for p_S = 1 - 2 N(-10)
    q = 10.0
    exact = upper_tail_inv(mp.log(2 * ncdf(-q)))
    assert tail_inv_asymptotic(q, restriction_arg("b", q)) == pytest.approx(float(exact), rel=1e-3)


def test_tail_monotone_in_q():
    qs = np.linspace(8.0, 30.0, 50)
    v = tail_inv_asymptotic(qs, restriction_arg("b", qs))
    assert np.all(np.diff(v) > 0.0)


def test_tail_domain():
    with pytest.raises(DomainError):
        tail_inv_asymptotic(7.9, 0.25)
    with pytest.raises(DomainError):
        tail_inv_asymptotic(9.0, 0.0)
    with pytest.raises(ValueError):
        restriction_arg("h", 9.0)


def test_bivar_norm_cdf_identities():
    assert bivar_norm_cdf(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-15)
    for a, b in [(-1.0, 0.5), (2.0, -3.0), (-6.0, -1.0)]:
        assert bivar_norm_cdf(a, b, 0.0) == pytest.approx(norm_cdf(a) * norm_cdf(b), rel=1e-13)
    for rho in (-0.95, -0.5, 0.1, 0.5, 0.99):
        assert bivar_norm_cdf(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-14)


def test_bivar_norm_cdf_against_quadrature():
    # P(X<=a, Y<=b) = int_{-inf}^{a} phi(x) N((b - rho x)/sqrt(1-rho^2)) dx
    for a, b, rho in [(-2.0, 1.0, 0.3), (-2.5, -2.4, 0.9), (1.5, -0.5, -0.7), (-3.0, 2.33, -0.2)]:
        r = mp.sqrt(1 - mp.mpf(rho) ** 2)
        ref = mp.quad(lambda x: mp.npdf(x) * ncdf((b - rho * x) / r), [-mp.inf, a])
        assert bivar_norm_cdf(a, b, rho) == pytest.approx(float(ref), rel=1e-12)


def test_bivar_norm_cdf_limits():
    assert bivar_norm_cdf(-1.0, 0.5, 1.0) == pytest.approx(norm_cdf(-1.0), rel=1e-14)
    assert bivar_norm_cdf(1.0, 0.5, -1.0) == pytest.approx(max(norm_cdf(1.0) + norm_cdf(0.5) - 1.0, 0.0), abs=1e-14)
    with pytest.raises(DomainError):
        bivar_norm_cdf(0.0, 0.0, 1.01)


def test_cholesky_closed_forms(rng):
    assert np.array_equal(cholesky(np.eye(4)).matrix, np.eye(4))
    rho = 0.37
    L = cholesky(np.array([[1.0, rho], [rho, 1.0]])).matrix
    assert np.allclose(L, [[1.0, 0.0], [rho, math.sqrt(1 - rho * rho)]], rtol=0, atol=1e-15)
    A = rng.standard_normal((5, 5))
    S = A @ A.T + 0.5 * np.eye(5)
    Lt = cholesky(S)
    assert np.max(np.abs(Lt.reconstruct() - S)) < 1e-12
    assert np.allclose(Lt.matrix, np.linalg.cholesky(S), rtol=1e-12, atol=1e-12)


def test_cholesky_rejects_indefinite():
    S = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
    with pytest.raises(NotPositiveDefiniteError) as exc:
        cholesky(S)
    assert exc.value.pivot == 2
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 0.2], [0.3, 1.0]]))
