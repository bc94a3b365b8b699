"""Market inputs: discount curves, CDS quotes, default-probability curves.

The default-probability curve is bootstrapped from par CDS spreads under a
piecewise-constant hazard, and the time change that makes the driftless
barrier model reproduce it is exposed as :func:`effective_time`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .errors import ArbitrageError, DegenerateCurveError, DomainError, ValidationError

PROB_FLOOR = 1e-16
_LOG_SURVIVAL_FLOOR = float(np.log(PROB_FLOOR))


# --------------------------------------------------------------------------
# Discount curve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscountCurve:
    """Discount factors at pillar times, log-linear in between.

    Beyond the last pillar the last forward rate is extended.
    """

    times: np.ndarray
    dfs: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.dfs, dtype=float)
        if t.ndim != 1 or t.shape != d.shape or t.size == 0:
            raise ValidationError("discount curve needs matching, non-empty time and factor columns")
        if t[0] != 0.0:
            t = np.concatenate([[0.0], t])
            d = np.concatenate([[1.0], d])
        if d[0] != 1.0:
            raise ValidationError("discount factor at time 0 must be 1")
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("discount pillars must be strictly increasing")
        if np.any(d <= 0.0) or np.any(d > 1.0) or np.any(np.diff(d) > 0.0):
            raise ValidationError("discount factors must be in (0, 1] and nonincreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "dfs", d)
        object.__setattr__(self, "_logd", np.log(d))

    @classmethod
    def flat(cls, rate: float, horizon: float = 50.0) -> "DiscountCurve":
        return cls(np.array([0.0, horizon]), np.array([1.0, np.exp(-rate * horizon)]))

    def df(self, t):
        """Discount factor D(0, t)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError("discount factor requested at negative time")
        logd = np.interp(t, self.times, self._logd)
        if self.times.size > 1:
            slope = (self._logd[-1] - self._logd[-2]) / (self.times[-1] - self.times[-2])
            beyond = t > self.times[-1]
            logd = np.where(beyond, self._logd[-1] + slope * (t - self.times[-1]), logd)
        out = np.exp(logd)
        return out if out.ndim else float(out)

    def forward_df(self, t, T):
        """D(t, T) = D(0, T) / D(0, t)."""
        return self.df(T) / self.df(t)


# --------------------------------------------------------------------------
# Quotes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CdsQuoteSet:
    """Par CDS spreads (decimal per annum) for one name."""

    tenors: np.ndarray
    par_spreads: np.ndarray
    recovery: float
    frequency: int = 4
    name: str = ""

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.tenors, dtype=float))
        s = np.atleast_1d(np.asarray(self.par_spreads, dtype=float))
        if t.shape != s.shape or t.size == 0:
            raise ValidationError("quotes need matching tenor and spread columns")
        if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
            raise ValidationError("CDS tenors must be positive and strictly increasing")
        if np.any(s < 0.0):
            raise ValidationError("CDS spreads must be nonnegative")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValidationError("recovery must lie in [0, 1]")
        if self.frequency < 1:
            raise ValidationError("payment frequency must be positive")
        object.__setattr__(self, "tenors", t)
        object.__setattr__(self, "par_spreads", s)


@dataclass(frozen=True)
class SpreadVolQuote:
    """Annualised CDS spread-return volatility at one tenor (5y by default)."""

    sigma_m: float
    tenor: float = 5.0

    def __post_init__(self):
        if not self.sigma_m > 0.0:
            raise ValidationError("spread volatility must be positive")
        if not self.tenor > 0.0:
            raise ValidationError("spread volatility tenor must be positive")


# --------------------------------------------------------------------------
# Default-probability curve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketPdCurve:
    """Cumulative risk-neutral default probabilities p_D(t) at pillars.

    Interpolation is linear in log-survival, i.e. a piecewise-constant
    hazard.  Below the first pillar the first hazard applies from 0 and past
    the last pillar the last hazard is extended.
    """

    times: np.ndarray
    pds: np.ndarray
    interpolation: str = "log-survival-linear"
    _log_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        p = np.atleast_1d(np.asarray(self.pds, dtype=float))
        if t.shape != p.shape or t.size == 0:
            raise ValidationError("PD curve needs matching time and probability columns")
        if t[0] != 0.0:
            t = np.concatenate([[0.0], t])
            p = np.concatenate([[0.0], p])
        if p[0] != 0.0:
            raise ValidationError("p_D(0) must be 0")
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("PD pillars must be strictly increasing in time")
        if np.any(p < 0.0) or np.any(p >= 1.0):
            raise ValidationError("pillar default probabilities must lie in [0, 1)")
        if np.any(np.diff(p) < 0.0):
            raise ArbitrageError("cumulative default probability decreases between pillars")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "pds", p)
        object.__setattr__(self, "_log_s", np.log1p(-p))

    @classmethod
    def from_log_survival(cls, times, log_s) -> "MarketPdCurve":
        """Build from log-survival pillars, keeping full precision when survival is tiny."""
        log_s = np.asarray(log_s, dtype=float)
        curve = cls(times, -np.expm1(log_s))
        if curve.times.size == log_s.size:
            object.__setattr__(curve, "_log_s", log_s)
        return curve

    @property
    def hazards(self) -> np.ndarray:
        return -np.diff(self._log_s) / np.diff(self.times)

    def log_survival(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError("PD curve evaluated at negative time")
        out = np.interp(t, self.times, self._log_s)
        h_last = self.hazards[-1]
        out = np.where(t > self.times[-1], self._log_s[-1] - h_last * (t - self.times[-1]), out)
        return out if out.ndim else float(out)

    def survival(self, t):
        return np.exp(self.log_survival(t))

    def pd(self, t):
        return -np.expm1(self.log_survival(t))

    @property
    def last_pillar(self) -> float:
        return float(self.times[-1])


def payment_schedule(tenor: float, frequency: int) -> np.ndarray:
    """Payment dates k/frequency up to ``tenor`` (a short final stub if needed)."""
    step = 1.0 / frequency
    n = int(np.floor(tenor * frequency + 1e-9))
    dates = step * np.arange(1, n + 1)
    if dates.size == 0 or tenor - dates[-1] > 1e-9:
        dates = np.append(dates, tenor)
    else:
        dates[-1] = tenor
    return dates


def par_spread_on_grid(acc, surv, dfs, recovery: float, s0: float = 1.0) -> float:
    """Par spread on a payment grid.

    Protection leg (1-R) sum DF_k (S_{k-1} - S_k); the premium leg accrues on
    the average of the bracketing survival probabilities.
    """
    prev = np.concatenate([[s0], surv[:-1]])
    prot = (1.0 - recovery) * np.sum(dfs * (prev - surv))
    ann = np.sum(dfs * acc * 0.5 * (prev + surv))
    return prot / ann


def bootstrap_pd_curve(quotes: CdsQuoteSet, disc: DiscountCurve) -> MarketPdCurve:
    """Sequential per-pillar hazard fit reproducing each quoted par spread."""
    R = quotes.recovery
    if np.any(quotes.par_spreads > 0.0) and R >= 1.0:
        raise ArbitrageError("positive spread with full recovery has no protection value")
    freq = quotes.frequency
    times = [0.0]
    log_s = [0.0]
    for tenor, spread in zip(quotes.tenors, quotes.par_spreads):
        dates = payment_schedule(tenor, freq)
        acc = np.diff(np.concatenate([[0.0], dates]))
        dfs = np.asarray(disc.df(dates))
        t_prev, ls_prev = times[-1], log_s[-1]
        fixed = dates <= t_prev + 1e-12
        base = np.interp(dates[fixed], times, log_s)

        def model(h):
            ls = np.empty_like(dates)
            ls[fixed] = base
            ls[~fixed] = ls_prev - h * (dates[~fixed] - t_prev)
            return par_spread_on_grid(acc, np.exp(ls), dfs, R)

        if spread == 0.0:
            h = 0.0
            if model(0.0) > 0.0:
                raise ArbitrageError(f"zero spread at {tenor:g}y after earlier default mass")
        else:
            lo = 0.0
            if model(lo) > spread:
                raise ArbitrageError(f"quote at {tenor:g}y needs a negative hazard (survival would increase)")
            hi = max(1.0, 2.0 * spread / max(1.0 - R, 1e-12))
            while model(hi) < spread:
                hi *= 2.0
                if hi > 1e4:
                    raise ArbitrageError(f"quote at {tenor:g}y cannot be matched with survival in (0, 1]")
            h = brentq(lambda x: model(x) - spread, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=500)
        if ls_prev - h * (tenor - t_prev) < _LOG_SURVIVAL_FLOOR:
            raise ArbitrageError(f"quote at {tenor:g}y implies survival below {PROB_FLOOR:g}")
        times.append(float(tenor))
        log_s.append(ls_prev - h * (tenor - t_prev))
    return MarketPdCurve.from_log_survival(np.array(times), np.array(log_s))


def reprice_quotes(curve: MarketPdCurve, quotes: CdsQuoteSet, disc: DiscountCurve) -> np.ndarray:
    """Par spreads implied by ``curve`` at the quote tenors."""
    out = []
    for tenor in quotes.tenors:
        dates = payment_schedule(tenor, quotes.frequency)
        acc = np.diff(np.concatenate([[0.0], dates]))
        out.append(par_spread_on_grid(acc, curve.survival(dates), np.asarray(disc.df(dates)), quotes.recovery))
    return np.array(out)


# --------------------------------------------------------------------------
# Time change
# --------------------------------------------------------------------------

def _checked_pd(curve: MarketPdCurve, t: np.ndarray) -> np.ndarray:
    pd = np.asarray(curve.pd(t), dtype=float)
    bad = (t > 0.0) & ~(pd > 0.0)
    if np.any(bad):
        raise DegenerateCurveError(f"p_D is zero at t = {float(t[bad][0]):g}; time change undefined")
    if np.any(pd >= 1.0):
        raise DegenerateCurveError("p_D reaches 1; time change undefined")
    return np.clip(pd, PROB_FLOOR, 1.0 - PROB_FLOOR)


def effective_time(curve: MarketPdCurve, y0: float, t):
    """t_bar(t) = y0^2 / N^-1(p_D(t)/2)^2, with t_bar(0) = 0."""
    if not y0 > 0.0:
        raise DomainError("y0 must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("effective time requested at negative t")
    pos = t > 0.0
    out = np.zeros(t.shape)
    if np.any(pos):
        pd = _checked_pd(curve, t[pos])
        out[pos] = y0 * y0 / ndtri(0.5 * pd) ** 2
    return out if out.ndim else float(out)


def bucket_variance(curve: MarketPdCurve, y0: float, t, T):
    """Delta t_{T,t} = t_bar(T) - t_bar(t); must be positive."""
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(t < 0.0) or np.any(T <= t):
        raise DomainError("bucket_variance requires 0 <= t < T")
    dv = np.asarray(effective_time(curve, y0, T)) - np.asarray(effective_time(curve, y0, t))
    if np.any(~(dv > 0.0)):
        raise DegenerateCurveError("nonpositive bucket variance: p_D is flat over the bucket")
    return dv if dv.ndim else float(dv)


# --------------------------------------------------------------------------
# File loaders
# --------------------------------------------------------------------------

def read_table(path) -> list[dict[str, str]]:
    """Read a headed text table with comma or whitespace separators.

    Blank lines and lines starting with ``#`` are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing input file: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValidationError(f"{path}: empty table")
    if "," in lines[0]:
        rows = list(csv.reader(lines, skipinitialspace=True))
    else:
        rows = [ln.split() for ln in lines]
    header = [h.strip().lower() for h in rows[0]]
    out = []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValidationError(f"{path}: line {i} has {len(r)} fields, expected {len(header)}")
        out.append({h: v.strip() for h, v in zip(header, r)})
    return out


def _column(rows, key, path, conv=float):
    try:
        return [conv(r[key]) for r in rows]
    except KeyError:
        raise ValidationError(f"{path}: missing column {key!r}") from None
    except ValueError as exc:
        raise ValidationError(f"{path}: bad value in column {key!r} ({exc})") from None


def load_cds_quotes(path, name: str = "", frequency: int = 4) -> CdsQuoteSet:
    """Columns ``tenor_years, par_spread_bps, recovery``; spreads converted to decimal."""
    rows = read_table(path)
    tenors = _column(rows, "tenor_years", path)
    bps = _column(rows, "par_spread_bps", path)
    rec = _column(rows, "recovery", path)
    if len(set(rec)) != 1:
        raise ValidationError(f"{path}: recovery must be the same on every row")
    return CdsQuoteSet(np.array(tenors), np.array(bps) * 1e-4, rec[0], frequency, name)


def load_discount_curve(path) -> DiscountCurve:
    """Columns ``time_years, discount_factor``."""
    rows = read_table(path)
    return DiscountCurve(np.array(_column(rows, "time_years", path)), np.array(_column(rows, "discount_factor", path)))


def load_spread_vol(path) -> SpreadVolQuote:
    """Columns ``tenor_years, sigma_m``; the 5y row is used when several are given."""
    rows = read_table(path)
    tenors = _column(rows, "tenor_years", path)
    vols = _column(rows, "sigma_m", path)
    i = int(np.argmin(np.abs(np.array(tenors) - 5.0)))
    return SpreadVolQuote(vols[i], tenors[i])
