"""Multi-step Monte Carlo for bilateral CVA.

Two estimators are provided.  The unconditional one simulates every name
jointly and books exposure when exactly one of counterparty and investor
defaults in a bucket.  The conditional one follows the surviving path and, in
every bucket, reprices the portfolio in two conditional worlds (counterparty
defaults / investor defaults) weighted by their bivariate-normal
probabilities.

Scenarios are processed in fixed-size chunks; each scenario draws from its
own counter-based substreams and chunk results are merged in chunk order, so
a run is bit-identical for any number of worker threads.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from . import _kernels
from . import rng as streams
from .copula import CorrelationStructure, FactorLoadings, build_structure, conditional_scores
from .dtd import CreditName
from .errors import ComputationError, DomainError, ValidationError
from .market_data import DiscountCurve, read_table
from .mathkit import bivar_norm_cdf
from .pricing import DealBook, Instrument, PartyConfig, net_exposure

MODES = ("conditional", "unconditional")
ABORT_LIMIT = 1e-3


# --------------------------------------------------------------------------
# Configuration and inputs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrix:
    """Per-bucket rating transition probabilities, ratings best to worst."""

    labels: tuple
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        labels = tuple(self.labels)
        if m.ndim != 2 or m.shape != (len(labels), len(labels)):
            raise ValidationError("transition matrix must be square and match its labels")
        if np.any(m < 0.0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise ValidationError("transition matrix rows must be probability vectors")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", m)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown rating {label!r}") from None

    def no_breach_probs(self, initial: str, trigger: str, n_buckets: int) -> np.ndarray:
        """p_M per bucket: probability of staying above ``trigger`` over the
        bucket, given no breach so far (breach states are absorbing)."""
        i0, it = self.index(initial), self.index(trigger)
        P = self.matrix.copy()
        P[it:] = 0.0
        P[it:, it:] = np.eye(len(self.labels) - it)
        dist = np.zeros(len(self.labels))
        dist[i0] = 1.0
        breached = 1.0 if i0 >= it else 0.0
        out = np.empty(n_buckets)
        for b in range(n_buckets):
            dist = dist @ P
            now = float(dist[it:].sum())
            out[b] = (1.0 - now) / (1.0 - breached) if breached < 1.0 else 0.0
            breached = now
        return np.clip(out, 0.0, 1.0)


def load_transition_matrix(path) -> TransitionMatrix:
    """Square table with a rating header row and a rating label per row."""
    rows = read_table(path)
    if not rows:
        raise ValidationError(f"{path}: empty transition matrix")
    header = list(rows[0].keys())
    key, cols = header[0], header[1:]
    labels = [r[key] for r in rows]
    if [lab.lower() for lab in labels] != cols:
        raise ValidationError(f"{path}: row labels must match the header")
    try:
        m = np.array([[float(r[c]) for c in cols] for r in rows])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: bad transition entry ({exc})") from None
    return TransitionMatrix(tuple(labels), m)


def quarterly_grid(maturity: float, frequency: int = 4) -> np.ndarray:
    n = int(math.ceil(maturity * frequency - 1e-9))
    grid = np.arange(n + 1) / frequency
    grid[-1] = maturity
    return grid


@dataclass(frozen=True)
class CvaRunConfig:
    n_scenarios: int
    grid: np.ndarray
    mode: str = "conditional"
    netting: bool = True
    seed: int = 0
    kappa: float = 0.0
    trigger_rating: str | None = None
    transition: TransitionMatrix | None = None
    threads: int = 1
    chunk_size: int = 8192

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or np.any(np.diff(g) <= 0.0):
            raise ValidationError("time grid must start at 0 and be strictly increasing")
        if self.n_scenarios < 1:
            raise ValidationError("n_scenarios must be at least 1")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.trigger_rating is not None and self.transition is None:
            raise ValidationError("a trigger rating needs a transition matrix")
        if self.threads < 1 or self.chunk_size < 1:
            raise ValidationError("threads and chunk_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "grid", g)


@dataclass(frozen=True)
class CvaInputs:
    """Calibrated names (ordered like the loadings), correlation, discounting, parties."""

    names: tuple
    structure: CorrelationStructure
    disc: DiscountCurve
    parties: PartyConfig

    def __post_init__(self):
        names = tuple(self.names)
        if tuple(n.name for n in names) != self.structure.loadings.names:
            raise ValidationError("names must follow the loadings order (counterparty, investor, references)")
        object.__setattr__(self, "names", names)


@dataclass
class CvaReport:
    times: np.ndarray
    cva_mean: np.ndarray
    cva_se: np.ndarray
    p12_I_mean: np.ndarray
    p12_II_mean: np.ndarray
    defaults_cpty: np.ndarray
    defaults_inv: np.ndarray
    trigger_stops: np.ndarray
    total: float
    total_se: float
    n_scenarios: int
    n_aborted: int
    mode: str
    netting: bool
    seed: int
    backend: str = field(default=_kernels.BACKEND)

    def summary_rows(self) -> list[tuple[str, str]]:
        return [
            ("total_cva", repr(self.total)),
            ("total_se", repr(self.total_se)),
            ("n_scenarios", str(self.n_scenarios)),
            ("n_aborted", str(self.n_aborted)),
            ("mode", self.mode),
            ("netting", "on" if self.netting else "off"),
            ("seed", str(self.seed)),
        ]

    def profile_rows(self) -> list[list]:
        return [
            [repr(float(t)), repr(float(m)), repr(float(s)), repr(float(a)), repr(float(b)), int(c), int(d)]
            for t, m, s, a, b, c, d in zip(self.times, self.cva_mean, self.cva_se, self.p12_I_mean,
                                           self.p12_II_mean, self.defaults_cpty, self.defaults_inv)
        ]

    PROFILE_HEADER = ("t", "cva_mean", "cva_se", "p12_I_mean", "p12_II_mean", "defaults_cpty", "defaults_inv")

    def to_text(self) -> str:
        out = io.StringIO()
        for k, v in self.summary_rows():
            out.write(f"{k:<12} {v}\n")
        out.write("\n" + " ".join(f"{h:>14}" for h in self.PROFILE_HEADER) + "\n")
        for t, m, s, a, b, c, d in zip(self.times, self.cva_mean, self.cva_se, self.p12_I_mean,
                                       self.p12_II_mean, self.defaults_cpty, self.defaults_inv):
            out.write(f"{t:>14.4f} {m:>14.6e} {s:>14.6e} {a:>14.6e} {b:>14.6e} {c:>14d} {d:>14d}\n")
        return out.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.PROFILE_HEADER)
            w.writerows(self.profile_rows())


# --------------------------------------------------------------------------
# Small operations
# --------------------------------------------------------------------------

def joint_bucket_weights(p_S1, p_S2, q1, q2, L21):
    """(p12_I, p12_II): P(1 defaults, 2 survives) and P(1 survives, 2 defaults).

    ``q`` drives the threshold N^-1(p_S): the asymptotic form is used for
    q >= 8, otherwise N^-1(p_S) with p_S as given.
    """
    if not abs(L21) < 1.0:
        raise DomainError("|L21| must be below 1")
    p_S1, p_S2, q1, q2 = (np.asarray(v, dtype=float) for v in (p_S1, p_S2, q1, q2))
    for p in (p_S1, p_S2):
        if np.any(~((p > 0.0) & (p < 1.0))):
            raise DomainError("survival probabilities must lie in (0, 1)")
    thr1 = np.where(q1 >= _kernels.TAIL_SWITCH, _kernels.survival_threshold(q1, 1.0 - p_S1), ndtri(p_S1))
    thr2 = np.where(q2 >= _kernels.TAIL_SWITCH, _kernels.survival_threshold(q2, 1.0 - p_S2), ndtri(p_S2))
    return bivar_norm_cdf(-thr1, thr2, -L21), bivar_norm_cdf(thr1, -thr2, -L21)


CONTINUE, STOP = "continue", "stop"


def rating_trigger_step(u1, u2, p_M1, p_M2, mtm) -> str:
    """Trigger decision table: both breach, or the breaching side is out of the money for the other."""
    b1, b2 = u1 > p_M1, u2 > p_M2
    if b1 and b2:
        return STOP
    if b1 and mtm > 0.0:
        return STOP
    if b2 and mtm < 0.0:
        return STOP
    return CONTINUE


# --------------------------------------------------------------------------
# Run preparation
# --------------------------------------------------------------------------

class _Prepared:
    def __init__(self, config: CvaRunConfig, inputs: CvaInputs, deals: Sequence[Instrument]):
        self.config = config
        self.grid = config.grid
        self.nb = self.grid.size - 1
        names = [n.with_kappa(config.kappa) for n in inputs.names]
        self.names = names
        tb = np.array([n.tbar(self.grid) for n in names])  # (names, grid)
        self.sd = np.sqrt(np.diff(tb, axis=1)).T  # (buckets, names)
        if np.any(~(self.sd > 0.0)):
            raise ValidationError("every name needs a strictly increasing time change over the grid")
        self.x0 = np.array([n.params.y0 for n in names])
        st = inputs.structure
        self.L = st.chol.matrix
        self.L21, self.L22 = st.L21, st.L22
        self.s = st.n_factors
        self.ref_a = st.ref_loadings
        self.ref_idio = st.ref_idio
        self.n_ref = len(names) - 2
        self.df = np.asarray(inputs.disc.df(self.grid), dtype=float)
        self.book = DealBook(deals, names[2:], inputs.disc, self.grid)
        self.R1 = inputs.parties.recovery_cpty
        self.R2 = inputs.parties.recovery_inv
        self.pM = None
        if config.trigger_rating is not None:
            tm = config.transition
            r1 = inputs.parties.rating_cpty or names[0].rating
            r2 = inputs.parties.rating_inv or names[1].rating
            if r1 is None or r2 is None:
                raise ValidationError("rating trigger needs initial ratings for counterparty and investor")
            self.pM = np.stack([tm.no_breach_probs(r1, config.trigger_rating, self.nb),
                                tm.no_breach_probs(r2, config.trigger_rating, self.nb)], axis=1)

    def refs_from_K(self, K, eps):
        M = K @ self.L[2:].T
        return M @ self.ref_a.T + eps * self.ref_idio

    def exposure(self, b, x_ref, new_dead):
        w = self.book.values(b, x_ref, new_dead)
        return net_exposure(w, self.config.netting), w


@dataclass
class _ChunkResult:
    contrib: np.ndarray          # (n, buckets)
    aborted: np.ndarray          # (n,)
    p12_I: np.ndarray            # (buckets,) sums
    p12_II: np.ndarray
    def_c: np.ndarray
    def_i: np.ndarray
    trig: np.ndarray


def _advance_refs(prep, b, x_ref, z_ref):
    live = x_ref > 0.0
    xn = np.zeros_like(x_ref)
    new_dead = np.zeros(x_ref.shape, dtype=bool)
    if prep.n_ref and live.any():
        sd = np.broadcast_to(prep.sd[b - 1, 2:], x_ref.shape)
        xv, dead = _kernels.advance(x_ref[live], sd[live], z_ref[live])
        xn[live] = np.where(dead, 0.0, xv)
        new_dead[live] = dead
    return xn, new_dead


def _run_chunk(prep: _Prepared, scen: np.ndarray) -> _ChunkResult:
    cfg = prep.config
    seed = cfg.seed
    n, nb = scen.size, prep.nb
    conditional = cfg.mode == "conditional"
    X = np.tile(prep.x0, (n, 1))
    active = np.ones(n, dtype=bool)
    aborted = np.zeros(n, dtype=bool)
    contrib = np.zeros((n, nb))
    p12I, p12II = np.zeros(nb), np.zeros(nb)
    def_c, def_i, trig = (np.zeros(nb, dtype=np.int64) for _ in range(3))
    s, nr = prep.s, prep.n_ref

    for b in range(1, nb + 1):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        sc = scen[act]
        Xa = X[act]
        disc = prep.df[b]
        c = np.zeros(act.size)
        with np.errstate(all="ignore"):
            if conditional:
                q1 = Xa[:, 0] / prep.sd[b - 1, 0]
                q2 = Xa[:, 1] / prep.sd[b - 1, 1]
                pd1, pd2 = 2.0 * ndtr(-q1), 2.0 * ndtr(-q2)
                thr1 = _kernels.survival_threshold(q1, pd1)
                thr2 = _kernels.survival_threshold(q2, pd2)
                wI = _kernels.bvn_lower(-thr1, thr2, -prep.L21)
                wII = _kernels.bvn_lower(thr1, -thr2, -prep.L21)
                p12I[b - 1] = wI.sum()
                p12II[b - 1] = wII.sum()
                for case, s_cond, s_fresh in ((1, streams.CASE_I, streams.CASE_I_FRESH),
                                              (2, streams.CASE_II, streams.CASE_II_FRESH)):
                    K1, K2 = conditional_scores(
                        case, prep.L21, q1, pd1, q2, pd2,
                        lambda att, idx, _s=s_cond: streams.scenario_uniforms(seed, sc[idx], b, _s, 3, att),
                    )
                    if nr:
                        fresh = streams.scenario_normals(seed, sc, b, s_fresh, s + nr)
                        K = np.column_stack([K1, K2, fresh[:, :s]])
                        x_ref, nd = _advance_refs(prep, b, Xa[:, 2:], prep.refs_from_K(K, fresh[:, s:]))
                    else:
                        x_ref, nd = Xa[:, 2:], np.zeros((act.size, 0), dtype=bool)
                    (pos, neg), _ = prep.exposure(b, x_ref, nd)
                    if case == 1:
                        c += (1.0 - prep.R1) * wI * pos * disc
                    else:
                        c -= (1.0 - prep.R2) * wII * neg * disc

            # surviving path: all names jointly
            z = streams.scenario_normals(seed, sc, b, streams.MAIN, s + 2 + nr)
            K = z[:, :s + 2]
            y1 = K[:, 0]
            y2 = prep.L21 * K[:, 0] + prep.L22 * K[:, 1]
            scores = np.column_stack([y1, y2, prep.refs_from_K(K, z[:, s + 2:])]) if nr else np.column_stack([y1, y2])
            xn12, dead12 = _kernels.advance(Xa[:, :2], prep.sd[b - 1, :2], scores[:, :2])
            x_ref, nd = _advance_refs(prep, b, Xa[:, 2:], scores[:, 2:])
            dc, di = dead12[:, 0], dead12[:, 1]
            def_c[b - 1] = dc.sum()
            def_i[b - 1] = di.sum()
            if not conditional:
                ec, ei = dc & ~di, di & ~dc
                p12I[b - 1] = ec.sum()
                p12II[b - 1] = ei.sum()
                hit = np.flatnonzero(ec | ei)
                if hit.size:
                    (pos, neg), _ = prep.exposure(b, x_ref[hit], nd[hit])
                    c[hit] = np.where(ec[hit], (1.0 - prep.R1) * pos * disc, -(1.0 - prep.R2) * neg * disc)

            stop = dc | di
            if prep.pM is not None:
                u = ndtr(scores[:, :2])
                br1 = (u[:, 0] > prep.pM[b - 1, 0]) & ~stop
                br2 = (u[:, 1] > prep.pM[b - 1, 1]) & ~stop
                both = br1 & br2
                one = np.flatnonzero(br1 ^ br2)
                tstop = both.copy()
                if one.size:
                    _, w = prep.exposure(b, x_ref[one], nd[one])
                    mtm = w.sum(axis=1)
                    tstop[one] = (br1[one] & (mtm > 0.0)) | (br2[one] & (mtm < 0.0))
                trig[b - 1] = tstop.sum()
                stop = stop | tstop

        bad = ~np.isfinite(c)
        if bad.any():
            aborted[act[bad]] = True
            c[bad] = 0.0
            stop = stop | bad
        contrib[act, b - 1] = c
        X[act, 0:2] = np.where(dead12, 0.0, xn12)
        X[act, 2:] = x_ref
        active[act[stop]] = False
    contrib[aborted] = 0.0
    return _ChunkResult(contrib, aborted, p12I, p12II, def_c, def_i, trig)


class _Accumulator:
    """Ordered merge of per-chunk means and centred second moments."""

    def __init__(self, nb):
        self.n = 0
        self.mean = np.zeros(nb)
        self.m2 = np.zeros(nb)
        self.tmean = 0.0
        self.tm2 = 0.0

    def add(self, rows: np.ndarray):
        m = rows.shape[0]
        if m == 0:
            return
        tot = rows.sum(axis=1)
        cm, cm2 = rows.mean(axis=0), ((rows - rows.mean(axis=0)) ** 2).sum(axis=0)
        tm, tm2 = tot.mean(), float(((tot - tot.mean()) ** 2).sum())
        n = self.n + m
        d, dt = cm - self.mean, tm - self.tmean
        self.mean = self.mean + d * (m / n)
        self.m2 = self.m2 + cm2 + d * d * (self.n * m / n)
        self.tmean = self.tmean + dt * (m / n)
        self.tm2 = self.tm2 + tm2 + dt * dt * (self.n * m / n)
        self.n = n


def run(config: CvaRunConfig, inputs: CvaInputs, deals: Sequence[Instrument]) -> CvaReport:
    """Run the engine and aggregate a :class:`CvaReport`."""
    prep = _Prepared(config, inputs, deals)
    nb = prep.nb
    chunks = [np.arange(i, min(i + config.chunk_size, config.n_scenarios), dtype=np.uint64)
              for i in range(0, config.n_scenarios, config.chunk_size)]
    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda c: _run_chunk(prep, c), chunks))
    else:
        results = [_run_chunk(prep, c) for c in chunks]

    acc = _Accumulator(nb)
    p12I, p12II = np.zeros(nb), np.zeros(nb)
    def_c, def_i, trig = (np.zeros(nb, dtype=np.int64) for _ in range(3))
    n_aborted = 0
    for r in results:
        acc.add(r.contrib[~r.aborted])
        n_aborted += int(r.aborted.sum())
        p12I += r.p12_I
        p12II += r.p12_II
        def_c += r.def_c
        def_i += r.def_i
        trig += r.trig
    if n_aborted > ABORT_LIMIT * config.n_scenarios:
        raise ComputationError(f"{n_aborted} of {config.n_scenarios} scenarios aborted on numerical failure")
    n_ok = acc.n
    if n_ok == 0:
        raise ComputationError("no scenario completed")
    var = acc.m2 / (n_ok - 1) if n_ok > 1 else np.zeros(nb)
    tvar = acc.tm2 / (n_ok - 1) if n_ok > 1 else 0.0
    return CvaReport(
        times=config.grid[1:].copy(),
        cva_mean=acc.mean,
        cva_se=np.sqrt(var / n_ok),
        p12_I_mean=p12I / config.n_scenarios,
        p12_II_mean=p12II / config.n_scenarios,
        defaults_cpty=def_c,
        defaults_inv=def_i,
        trigger_stops=trig,
        total=float(acc.tmean),
        total_se=float(math.sqrt(tvar / n_ok)),
        n_scenarios=config.n_scenarios,
        n_aborted=n_aborted,
        mode=config.mode,
        netting=config.netting,
        seed=config.seed,
    )


def run_scenario_conditional(config: CvaRunConfig, inputs: CvaInputs, deals, scenario_index: int) -> np.ndarray:
    """Per-bucket CVA contributions of one scenario in conditional mode."""
    cfg = _with_mode(config, "conditional")
    return _single(cfg, inputs, deals, scenario_index)


def run_scenario_unconditional(config: CvaRunConfig, inputs: CvaInputs, deals, scenario_index: int) -> np.ndarray:
    """Per-bucket CVA contributions of one scenario in unconditional mode."""
    cfg = _with_mode(config, "unconditional")
    return _single(cfg, inputs, deals, scenario_index)


def _with_mode(config, mode):
    from dataclasses import replace

    return replace(config, mode=mode)


def _single(cfg, inputs, deals, idx):
    prep = _Prepared(cfg, inputs, deals)
    r = _run_chunk(prep, np.array([idx], dtype=np.uint64))
    if r.aborted[0]:
        raise ComputationError(f"scenario {idx} aborted on numerical failure")
    return r.contrib[0]


# --------------------------------------------------------------------------
# Path simulation helpers (martingale and transition checks)
# --------------------------------------------------------------------------

def simulate_states(names: Sequence[CreditName], structure: CorrelationStructure, grid, n_paths: int,
                    seed: int, chunk_size: int = 65536):
    """Joint unconditional simulation of all names on ``grid``.

    Returns scaled states of shape ``(n_paths, len(grid), n_names)``, zero
    after default.
    """
    grid = np.asarray(grid, dtype=float)
    names = list(names)
    tb = np.array([n.tbar(grid) for n in names])
    sd = np.sqrt(np.diff(tb, axis=1)).T
    L = structure.chol.matrix
    s = structure.n_factors
    nr = len(names) - 2
    out = np.zeros((n_paths, grid.size, len(names)))
    for start in range(0, n_paths, chunk_size):
        sc = np.arange(start, min(start + chunk_size, n_paths), dtype=np.uint64)
        X = np.tile([n.params.y0 for n in names], (sc.size, 1))
        out[sc.astype(np.intp), 0] = X
        for b in range(1, grid.size):
            z = streams.scenario_normals(seed, sc, b, streams.MAIN, s + 2 + nr)
            K = z[:, :s + 2]
            cols = [K[:, 0], L[1, 0] * K[:, 0] + L[1, 1] * K[:, 1]]
            if nr:
                M = K @ L[2:].T
                cols += list((M @ structure.ref_loadings.T + z[:, s + 2:] * structure.ref_idio).T)
            scores = np.column_stack(cols)
            live = X > 0.0
            xn, dead = _kernels.advance(X[live], np.broadcast_to(sd[b - 1], X.shape)[live], scores[live])
            X[live] = np.where(dead, 0.0, xn)
            out[sc.astype(np.intp), b] = X
    return out


# --------------------------------------------------------------------------
# Default correlation
# --------------------------------------------------------------------------

def default_correlation_analytic(p1, p2, rho):
    """(N2(N^-1 p1, N^-1 p2; rho) - p1 p2) / sqrt(p1 (1-p1) p2 (1-p2))."""
    p1, p2 = float(p1), float(p2)
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        raise DomainError("marginal default probabilities must lie in (0, 1)")
    if rho == 1.0 and p1 == p2:
        return 1.0
    j = bivar_norm_cdf(ndtri(p1), ndtri(p2), rho)
    return (j - p1 * p2) / math.sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2))


@dataclass(frozen=True)
class DefaultCorrelationEstimate:
    value: float
    se: float
    joint_defaults: int
    n: int


def simulate_default_correlation(p1, p2, rho, n_scenarios: int = 1_000_000, seed: int = 0,
                                 chunk_size: int = 262_144) -> DefaultCorrelationEstimate:
    """Default correlation over one horizon from engine default indicators.

    Two names calibrated so that their default probability over the horizon
    is p1 and p2 are correlated through a one-factor structure with
    a1'a2 = rho and advanced over a single bucket; the default flags come
    from the transition kernel.  The standard error is evaluated at the
    analytic joint default probability.
    """
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        raise DomainError("marginal default probabilities must lie in (0, 1)")
    if not -1.0 < rho < 1.0:
        raise DomainError("asset correlation must lie in (-1, 1)")
    r = math.sqrt(abs(rho))
    struct = build_structure(np.eye(1), FactorLoadings(("n1", "n2"), np.array([[r], [math.copysign(r, rho)]])))
    q = -ndtri(0.5 * np.array([p1, p2]))
    joint = 0
    for start in range(0, n_scenarios, chunk_size):
        sc = np.arange(start, min(start + chunk_size, n_scenarios), dtype=np.uint64)
        K = streams.scenario_normals(seed, sc, 1, streams.MAIN, 2)
        y = np.column_stack([K[:, 0], struct.L21 * K[:, 0] + struct.L22 * K[:, 1]])
        _, dead = _kernels.advance(np.broadcast_to(q, y.shape), 1.0, y)
        joint += int(np.count_nonzero(dead[:, 0] & dead[:, 1]))
    denom = math.sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2))
    p12 = joint / n_scenarios
    p12_null = bivar_norm_cdf(ndtri(p1), ndtri(p2), rho)
    value = (p12 - p1 * p2) / denom
    se = math.sqrt(p12_null * (1.0 - p12_null) / n_scenarios) / denom
    return DefaultCorrelationEstimate(value, se, joint, n_scenarios)


def default_correlation(p1, p2, rho_asset, horizon: float = 1.0, mode: str = "analytic",
                        n_scenarios: int = 1_000_000, seed: int = 0) -> float:
    """Default correlation of two names with horizon default probabilities p1, p2.

    ``horizon`` only labels the marginals (they are already horizon PDs).
    """
    if mode == "analytic":
        return default_correlation_analytic(p1, p2, rho_asset)
    if mode == "simulated":
        return simulate_default_correlation(p1, p2, rho_asset, n_scenarios, seed).value
    raise ValueError("mode must be 'analytic' or 'simulated'")


def fit_pd_for_default_correlation(target: float, rho: float, lo: float = 1e-8, hi: float = 0.5) -> float:
    """Same-rating marginal PD whose analytic default correlation equals ``target``."""
    f = lambda p: default_correlation_analytic(p, p, rho) - target
    if f(lo) * f(hi) > 0.0:
        raise DomainError("target default correlation not attainable on the PD bracket")
    return brentq(f, lo, hi, xtol=1e-16, rtol=1e-14)
