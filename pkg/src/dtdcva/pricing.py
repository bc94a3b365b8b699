"""Risky zero-coupon bonds and CDS, at inception and inside scenarios.

Scenario repricing uses the model's own forward law: a reference name with
scaled state X at time t survives to T with probability
1 - 2 N(-X / sqrt(t_bar(T) - t_bar(t))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .dtd import CreditName, DtdState
from .errors import DomainError, ValidationError
from .market_data import DiscountCurve, payment_schedule, read_table

KINDS = ("cds", "zcb")
_DIRECTIONS = {"long": 1, "buy": 1, "+1": 1, "1": 1, "short": -1, "sell": -1, "-1": -1}


@dataclass(frozen=True)
class Instrument:
    """A CDS or risky zero-coupon bond on one reference name.

    ``direction`` is +1 for bought protection (or a long bond) and -1 for sold
    protection (or a short bond).  ``contract_spread`` is decimal per annum;
    ``None`` means "par at inception", resolved by :func:`resolve_par_spreads`.
    """

    deal_id: str
    kind: str
    reference: str
    notional: float
    maturity: float
    recovery: float
    direction: int = 1
    contract_spread: float | None = None
    frequency: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"deal {self.deal_id}: unknown kind {self.kind!r}")
        if not self.maturity > 0.0:
            raise ValidationError(f"deal {self.deal_id}: maturity must be positive")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValidationError(f"deal {self.deal_id}: recovery must lie in [0, 1]")
        if self.notional == 0.0:
            raise ValidationError(f"deal {self.deal_id}: notional must be nonzero")
        if self.direction not in (1, -1):
            raise ValidationError(f"deal {self.deal_id}: direction must be +1 or -1")

    def schedule(self, t: float = 0.0):
        """Remaining payment dates after ``t`` and their full accrual periods."""
        dates = payment_schedule(self.maturity, self.frequency)
        acc = np.diff(np.concatenate([[0.0], dates]))
        keep = dates > t + 1e-12
        return dates[keep], acc[keep]


@dataclass(frozen=True)
class PartyConfig:
    """Recoveries and initial ratings of the counterparty and the investor."""

    recovery_cpty: float
    recovery_inv: float
    rating_cpty: str | None = None
    rating_inv: str | None = None

    def __post_init__(self):
        for r in (self.recovery_cpty, self.recovery_inv):
            if not 0.0 <= r <= 1.0:
                raise ValidationError("party recoveries must lie in [0, 1]")


def risky_zcb(pd, R, df):
    """[1 - (1 - R) p_D] D."""
    pd, R, df = (np.asarray(v, dtype=float) for v in (pd, R, df))
    if np.any((pd < 0.0) | (pd > 1.0)) or np.any((R < 0.0) | (R > 1.0)) or np.any((df <= 0.0) | (df > 1.0)):
        raise DomainError("risky_zcb inputs out of range")
    out = (1.0 - (1.0 - R) * pd) * df
    return out if out.ndim else float(out)


def _legs(t, dates, acc, survival, disc, R):
    surv = np.asarray([survival(T) for T in dates], dtype=float)
    if np.any(np.diff(np.concatenate([[1.0], surv])) > 1e-15) or np.any(surv < 0.0):
        raise DomainError("survival curve must be nonincreasing from 1")
    prev = np.concatenate([[1.0], surv[:-1]])
    df = np.asarray(disc.forward_df(t, dates), dtype=float)
    prot = (1.0 - R) * np.sum(df * (prev - surv))
    ann = np.sum(df * acc * 0.5 * (prev + surv))
    return prot, ann


def cds_par_spread(t: float, T: float, survival: Callable[[float], float], disc: DiscountCurve,
                   R: float, frequency: int = 4) -> float:
    """Par spread of a CDS from t to T on the quarterly grid k/frequency.

    ``survival(tau)`` is p_S(t, tau), survival from t to tau given alive at t.
    """
    inst = Instrument("par", "cds", "", 1.0, T, R, 1, 0.0, frequency)
    dates, acc = inst.schedule(t)
    if dates.size == 0:
        raise DomainError("empty payment grid")
    prot, ann = _legs(t, dates, acc, survival, disc, R)
    return float(prot / ann)


def spread_approx(pd, R, t):
    """Spread proxy (1 - R) p_D(t) / t, accurate for investment-grade names."""
    pd, t = np.asarray(pd, dtype=float), np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("spread proxy needs t > 0")
    out = (1.0 - R) * pd / t
    return out if out.ndim else float(out)


def cds_mtm(inst: Instrument, t: float, survival: Callable[[float], float], disc: DiscountCurve) -> float:
    """Protection-buyer MtM times direction: (par(t) - contract) x risky annuity x notional."""
    if inst.kind != "cds":
        raise DomainError("cds_mtm needs a CDS")
    if not t < inst.maturity:
        raise DomainError(f"deal {inst.deal_id} has matured")
    if inst.contract_spread is None:
        raise DomainError(f"deal {inst.deal_id}: contract spread unresolved")
    dates, acc = inst.schedule(t)
    prot, ann = _legs(t, dates, acc, survival, disc, inst.recovery)
    return float(inst.direction * inst.notional * (prot - inst.contract_spread * ann))


def scenario_survival(name: CreditName, state: DtdState) -> Callable[[float], float]:
    """p_S(t, tau) for a live name from its current distance-to-default."""
    x = float(name.params.lam(state.t)) * state.y
    tb = name.tbar(state.t)

    def surv(tau):
        return float(1.0 - 2.0 * ndtr(-x / math.sqrt(name.tbar(tau) - tb)))

    return surv


def market_survival(name: CreditName, t: float = 0.0) -> Callable[[float], float]:
    """Survival from t implied by the market curve."""
    s_t = name.curve.survival(t)
    return lambda tau: float(name.curve.survival(tau) / s_t)


def deal_value(inst: Instrument, t: float, state: DtdState, name: CreditName, disc: DiscountCurve,
               defaulted_now: bool = True) -> float:
    """W(t, y) for one deal.

    A reference that defaulted in the current bucket settles: a CDS pays
    (1 - R) x notional x direction, a bond is worth its recovery discounted
    to maturity.  Earlier defaults leave nothing.
    """
    if not state.alive:
        if not defaulted_now:
            return 0.0
        if inst.kind == "cds":
            return inst.direction * inst.notional * (1.0 - inst.recovery)
        return inst.direction * inst.notional * inst.recovery * float(disc.forward_df(t, inst.maturity))
    if t >= inst.maturity:
        return 0.0
    surv = scenario_survival(name, state)
    if inst.kind == "cds":
        return cds_mtm(inst, t, surv, disc)
    return inst.direction * inst.notional * risky_zcb(1.0 - surv(inst.maturity), inst.recovery,
                                                       float(disc.forward_df(t, inst.maturity)))


def net_exposure(values, netting: bool):
    """(positive, negative) exposure from deal values along the last axis."""
    w = np.asarray(values, dtype=float)
    if w.shape[-1] == 0:
        z = np.zeros(w.shape[:-1])
        return z, z.copy()
    if netting:
        tot = w.sum(axis=-1)
        return np.maximum(tot, 0.0), np.maximum(-tot, 0.0)
    return np.maximum(w, 0.0).sum(axis=-1), np.maximum(-w, 0.0).sum(axis=-1)


def portfolio_exposure(deals: Sequence[Instrument], t: float, scen_states: Mapping[str, DtdState],
                       names: Mapping[str, CreditName], disc: DiscountCurve, netting: bool = True):
    """(E+, E-) of a portfolio at t under one scenario's name states."""
    vals = []
    for d in deals:
        if d.reference not in scen_states:
            raise ValidationError(f"no scenario state for reference {d.reference!r}")
        vals.append(deal_value(d, t, scen_states[d.reference], names[d.reference], disc))
    pos, neg = net_exposure(np.array(vals, dtype=float), netting)
    return float(pos), float(neg)


def resolve_par_spreads(deals: Sequence[Instrument], names: Mapping[str, CreditName],
                        disc: DiscountCurve) -> list[Instrument]:
    """Replace unresolved contract spreads by the inception par spread."""
    out = []
    for d in deals:
        if d.kind == "cds" and d.contract_spread is None:
            s = cds_par_spread(0.0, d.maturity, market_survival(names[d.reference]), disc, d.recovery, d.frequency)
            d = replace(d, contract_spread=s)
        out.append(d)
    return out


def load_portfolio(path) -> list[Instrument]:
    """Columns ``deal_id, kind, reference_name, notional, maturity_years,
    contract_spread_bps, recovery, direction``; the spread may be ``par``."""
    rows = read_table(path)
    need = ("deal_id", "kind", "reference_name", "notional", "maturity_years",
            "contract_spread_bps", "recovery", "direction")
    deals = []
    for i, r in enumerate(rows, start=2):
        missing = [k for k in need if k not in r]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        try:
            direction = _DIRECTIONS[r["direction"].lower()]
        except KeyError:
            raise ValidationError(f"{path}: line {i}: direction must be long/short/buy/sell/+1/-1") from None
        spread = r["contract_spread_bps"].lower()
        try:
            deals.append(Instrument(
                r["deal_id"], r["kind"].lower(), r["reference_name"], float(r["notional"]),
                float(r["maturity_years"]), float(r["recovery"]), direction,
                None if spread in ("par", "") else float(spread) * 1e-4,
            ))
        except ValueError as exc:
            raise ValidationError(f"{path}: line {i}: {exc}") from None
    return deals


# --------------------------------------------------------------------------
# Vectorised repricing for the engine
# --------------------------------------------------------------------------

class DealBook:
    """Precomputed per-bucket repricing data for a portfolio.

    ``values(b, x, new_dead)`` returns deal values at grid time ``grid[b]``
    for scaled reference states ``x`` of shape ``(n, n_refs)``; references
    defaulting in bucket b settle, earlier defaults are passed as ``x = 0``
    with ``new_dead`` False and contribute nothing.
    """

    def __init__(self, deals: Sequence[Instrument], ref_names: Sequence[CreditName], disc: DiscountCurve, grid):
        self.deals = list(deals)
        self.grid = np.asarray(grid, dtype=float)
        idx = {n.name: i for i, n in enumerate(ref_names)}
        for d in self.deals:
            if d.reference not in idx:
                raise ValidationError(f"deal {d.deal_id}: reference {d.reference!r} is not a reference name")
            if d.kind == "cds" and d.contract_spread is None:
                raise ValidationError(f"deal {d.deal_id}: contract spread unresolved")
        self.ref_index = np.array([idx[d.reference] for d in self.deals], dtype=int)
        self._plan = [self._bucket_plan(t, ref_names, disc) for t in self.grid]

    @property
    def n_deals(self) -> int:
        return len(self.deals)

    def _bucket_plan(self, t, ref_names, disc):
        plan = []
        for d, k in zip(self.deals, self.ref_index):
            name = ref_names[k]
            tb_t = float(name.tbar(t))
            if d.kind == "cds":
                dates, acc = d.schedule(t)
                if dates.size:
                    inv_sd = 1.0 / np.sqrt(np.asarray(name.tbar(dates)) - tb_t)
                    df = np.asarray(disc.forward_df(t, dates), dtype=float)
                else:
                    inv_sd = df = np.zeros(0)
                settle = d.direction * d.notional * (1.0 - d.recovery)
                plan.append(("cds", k, inv_sd, df, acc, settle))
            else:
                if t < d.maturity:
                    inv_sd = np.array([1.0 / math.sqrt(float(name.tbar(d.maturity)) - tb_t)])
                    df = float(disc.forward_df(t, d.maturity))
                else:
                    inv_sd, df = np.zeros(0), 1.0
                settle = d.direction * d.notional * d.recovery * df
                plan.append(("zcb", k, inv_sd, df, None, settle))
        return plan

    def values(self, b: int, x, new_dead) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        new_dead = np.asarray(new_dead, dtype=bool)
        out = np.zeros((x.shape[0], self.n_deals))
        for j, (d, (kind, k, inv_sd, df, acc, settle)) in enumerate(zip(self.deals, self._plan[b])):
            xk = x[:, k]
            live = xk > 0.0
            col = np.zeros(x.shape[0])
            if inv_sd.size and live.any():
                if kind == "cds":
                    unit = _kernels.cds_unit_value(xk[live], inv_sd, df, acc, d.recovery, d.contract_spread)
                    col[live] = d.direction * d.notional * unit
                else:
                    pd = 2.0 * ndtr(-xk[live] * inv_sd[0])
                    col[live] = d.direction * d.notional * (1.0 - (1.0 - d.recovery) * pd) * df
            col[new_dead[:, k]] = settle
            out[:, j] = col
        return out
