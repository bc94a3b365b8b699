"""Distance-to-default dynamics under the market-implied time change.

In time-changed units the scaled state X = lambda_t * y_t is a Brownian
motion absorbed at zero, so every transition over a bucket is described by
the bucket variance Delta t_bar and the absorbed Gaussian kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .errors import ComputationError, DomainError
from .market_data import MarketPdCurve, SpreadVolQuote, bucket_variance, effective_time, _checked_pd

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class DtdParams:
    """Initial scaled distance-to-default and drift / mean-reversion constants."""

    y0: float
    theta_bar: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not self.y0 > 0.0:
            raise DomainError("y0 must be positive")

    def lam(self, t):
        """lambda_t = exp(kappa t)."""
        return np.exp(self.kappa * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class DtdState:
    name_id: str
    y: float
    t: float
    alive: bool = True

    def __post_init__(self):
        if self.alive and not self.y > 0.0:
            raise DomainError("a live name must have positive distance-to-default")


@dataclass(frozen=True)
class CreditName:
    """A calibrated name: market curve plus model constants."""

    name: str
    curve: MarketPdCurve
    params: DtdParams
    recovery: float = 0.4
    rating: str | None = None

    def tbar(self, t):
        return effective_time(self.curve, self.params.y0, t)

    def initial_state(self) -> DtdState:
        return DtdState(self.name, self.params.y0, 0.0, True)

    def with_kappa(self, kappa: float) -> "CreditName":
        return replace(self, params=replace(self.params, kappa=kappa))


def _positive(**kw):
    for k, v in kw.items():
        if np.any(~(np.asarray(v, dtype=float) > 0.0)):
            raise DomainError(f"{k} must be positive")


def transition_density(y0, y, tbar, theta_bar: float = 0.0):
    """Density of the absorbed process at y after effective time t_bar.

    Gaussian kernel with drift times the barrier factor 1 - exp(-2 y y0 / t_bar).
    """
    _positive(y0=y0, y=y, tbar=tbar)
    y0, y, tbar = (np.asarray(v, dtype=float) for v in (y0, y, tbar))
    sd = np.sqrt(tbar)
    kern = np.exp(-0.5 * ((y - y0 - theta_bar * tbar) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    out = kern * -np.expm1(-2.0 * y * y0 / tbar)
    return out if out.ndim else float(out)


def default_prob(y0, tbar, theta_bar: float = 0.0):
    """First-passage probability by effective time t_bar."""
    _positive(y0=y0, tbar=tbar)
    y0, tbar = np.asarray(y0, dtype=float), np.asarray(tbar, dtype=float)
    sd = np.sqrt(tbar)
    if theta_bar == 0.0:
        out = 2.0 * ndtr(-y0 / sd)
    else:
        out = ndtr(-(y0 + theta_bar * tbar) / sd) + np.exp(-2.0 * y0 * theta_bar) * ndtr(-(y0 - theta_bar * tbar) / sd)
    return out if out.ndim else float(out)


def bucket_default_prob(state: DtdState, curve: MarketPdCurve, params: DtdParams, T: float) -> float:
    """p_D(t, T) = 2 N(-lambda_t y_t / sqrt(Delta t_bar)) for a live name."""
    if not state.alive:
        raise DomainError("bucket default probability requested for a defaulted name")
    if not T > state.t:
        raise DomainError("bucket end must be after the state time")
    dv = bucket_variance(curve, params.y0, state.t, T)
    return float(2.0 * ndtr(-float(params.lam(state.t)) * state.y / math.sqrt(dv)))


def spread_vol(curve: MarketPdCurve, y0: float, t: float = 5.0):
    """Model spread volatility sigma_I(t) (absolute value)."""
    _positive(y0=y0)
    pd = _checked_pd(curve, np.atleast_1d(np.asarray(t, dtype=float)))
    n = ndtri(0.5 * pd)
    out = np.abs(_SQRT_2_OVER_PI * n / (y0 * pd) * np.exp(-0.5 * n * n))
    return out if np.ndim(t) else float(out[0])


def calibrate_y0(curve: MarketPdCurve, vol: SpreadVolQuote) -> float:
    """y0 matching the quoted spread volatility at ``vol.tenor`` (closed form)."""
    pd = float(_checked_pd(curve, np.array([vol.tenor]))[0])
    n = float(ndtri(0.5 * pd))
    return -_SQRT_2_OVER_PI * n / (vol.sigma_m * pd) * math.exp(-0.5 * n * n)


def survivor_cdf(x, s, w):
    """P(X' <= w s, no default) for a state x and bucket sd s (unnormalised)."""
    a = np.asarray(x, dtype=float) / s
    w = np.asarray(w, dtype=float)
    return ndtr(w - a) + ndtr(-w - a) - 2.0 * ndtr(-a)


def advance_dtd(state: DtdState, u: float, curve: MarketPdCurve, params: DtdParams, dt: float) -> DtdState:
    """Move a live name over [t, t+dt] given its copula uniform ``u``.

    Default when u >= p_S(t, t+dt); otherwise the new distance-to-default
    solves the transition-CDF equation.
    """
    if not state.alive:
        raise DomainError("defaulted names do not transition")
    if not 0.0 <= u < 1.0:
        raise DomainError("u must lie in [0, 1)")
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    t1 = state.t + dt
    x = float(params.lam(state.t)) * state.y
    s = math.sqrt(bucket_variance(curve, params.y0, state.t, t1))
    lam1 = float(params.lam(t1))
    p_s = 1.0 - 2.0 * ndtr(-x / s)
    if u >= p_s:
        return DtdState(state.name_id, 0.0, t1, False)
    if u == 0.0:
        return DtdState(state.name_id, _kernels.BARRIER_EPS / lam1, t1, True)
    xn, dead = _kernels.advance(np.array([x]), np.array([s]), np.array([ndtri(u)]))
    if dead[0]:
        # u sits within rounding of p_S: take the solver cap
        xn = np.array([x + 40.0 * s])
    if not np.isfinite(xn[0]):
        raise ComputationError("transition root-solve did not converge")
    return DtdState(state.name_id, float(xn[0]) / lam1, t1, True)


def advance_states(x, s, z):
    """Vectorised transition on scaled states; returns (new x, default flags)."""
    return _kernels.advance(x, s, z)


def survival_given_state(x, tbar_t: float, tbar_T: float):
    """p_S(t, T) from scaled state x, zero for absorbed paths (x = 0)."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, 1.0 - 2.0 * ndtr(-x / math.sqrt(tbar_T - tbar_t)), 0.0)


def simulate_name_paths(name: CreditName, grid, n_paths: int, seed: int, stream: int = 1, first_path: int = 0):
    """Simulate one name's scaled state on ``grid`` with counter-based uniforms.

    Returns an ``(n_paths, len(grid))`` array of X = lambda y, zero after
    default.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0:
        raise DomainError("grid must start at 0")
    tb = name.tbar(grid)
    sd = np.sqrt(np.diff(tb))
    scen = np.arange(first_path, first_path + n_paths, dtype=np.uint64)
    out = np.zeros((n_paths, grid.size))
    x = np.full(n_paths, name.params.y0 * float(name.params.lam(0.0)))
    out[:, 0] = x
    alive = np.ones(n_paths, dtype=bool)
    for b in range(1, grid.size):
        u = _kernels.uniforms(seed, scen, b, stream, 1)[:, 0]
        idx = np.flatnonzero(alive)
        xn, dead = _kernels.advance(x[idx], sd[b - 1], ndtri(u[idx]))
        x[idx] = np.where(dead, 0.0, xn)
        alive[idx[dead]] = False
        out[:, b] = x
    return out
