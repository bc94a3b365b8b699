"""Synthetic market setups with flat CDS curves.

Used for the sample manifest, the tests and the benchmark: an A-rated
counterparty and investor trading a 10y CDS on a BBB reference name.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .copula import FactorLoadings, build_structure
from .dtd import CreditName, DtdParams, calibrate_y0
from .engine import CvaInputs, CvaRunConfig, TransitionMatrix, quarterly_grid
from .market_data import CdsQuoteSet, DiscountCurve, SpreadVolQuote, bootstrap_pd_curve
from .pricing import Instrument, PartyConfig, resolve_par_spreads

TENORS = (1.0, 2.0, 3.0, 5.0, 7.0, 10.0)
RATING_SPREADS_BPS = {"A": 80.0, "BBB": 180.0, "BB": 350.0}

# one-period matrix for quarterly buckets (rows sum to 1), ratings best to worst
RATINGS = ("AAA", "AA", "A", "BBB", "BB", "B", "CCC", "D")
QUARTERLY_TRANSITION = np.array([
    [0.9780, 0.0200, 0.0015, 0.0003, 0.0001, 0.0001, 0.0000, 0.0000],
    [0.0020, 0.9760, 0.0190, 0.0020, 0.0004, 0.0003, 0.0001, 0.0002],
    [0.0002, 0.0050, 0.9770, 0.0150, 0.0015, 0.0006, 0.0002, 0.0005],
    [0.0001, 0.0008, 0.0100, 0.9700, 0.0140, 0.0030, 0.0006, 0.0015],
    [0.0000, 0.0002, 0.0010, 0.0150, 0.9580, 0.0180, 0.0020, 0.0058],
    [0.0000, 0.0001, 0.0006, 0.0015, 0.0180, 0.9550, 0.0100, 0.0148],
    [0.0000, 0.0000, 0.0005, 0.0010, 0.0040, 0.0300, 0.8900, 0.0745],
    [0.0000, 0.0000, 0.0000, 0.0000, 0.0000, 0.0000, 0.0000, 1.0000],
])


def flat_quotes(spread_bps: float, recovery: float = 0.4, tenors=TENORS, name: str = "") -> CdsQuoteSet:
    return CdsQuoteSet(np.array(tenors), np.full(len(tenors), spread_bps * 1e-4), recovery, 4, name)


def make_name(name: str, spread_bps: float, disc: DiscountCurve, sigma_m: float = 0.5,
              recovery: float = 0.4, rating: str | None = None) -> CreditName:
    curve = bootstrap_pd_curve(flat_quotes(spread_bps, recovery, name=name), disc)
    y0 = calibrate_y0(curve, SpreadVolQuote(sigma_m))
    return CreditName(name, curve, DtdParams(y0), recovery, rating)


def transition_matrix() -> TransitionMatrix:
    return TransitionMatrix(RATINGS, QUARTERLY_TRANSITION)


def table1_setup(loading: float = 0.4, rate: float = 0.03, maturity: float = 10.0, notional: float = 100.0,
                 cpty_bps: float = RATING_SPREADS_BPS["A"], inv_bps: float = RATING_SPREADS_BPS["A"],
                 ref_bps: float = RATING_SPREADS_BPS["BBB"], deal_recovery: float = 0.0,
                 party_recovery: float = 0.0, direction: int = 1):
    """A/A parties, BBB reference, one 10y CDS at par with zero recovery.

    Returns ``(inputs, deals)``.
    """
    disc = DiscountCurve.flat(rate)
    names = (
        make_name("CPTY", cpty_bps, disc, rating="A"),
        make_name("INV", inv_bps, disc, rating="A"),
        make_name("REF", ref_bps, disc, rating="BBB"),
    )
    loadings = FactorLoadings(tuple(n.name for n in names), np.full((3, 1), loading))
    structure = build_structure(np.eye(1), loadings)
    parties = PartyConfig(party_recovery, party_recovery, "A", "A")
    deal = Instrument("D1", "cds", "REF", notional, maturity, deal_recovery, direction, None)
    deals = resolve_par_spreads([deal], {n.name: n for n in names}, disc)
    return CvaInputs(names, structure, disc, parties), deals


def table1_config(n_scenarios: int, mode: str, seed: int = 1, maturity: float = 10.0, **kw) -> CvaRunConfig:
    return CvaRunConfig(n_scenarios, quarterly_grid(maturity), mode, seed=seed, **kw)


def write_sample_inputs(out_dir) -> Path:
    """Write a complete sample input set and manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "discount.csv").write_text(
        "time_years,discount_factor\n" + "".join(f"{t:g},{np.exp(-0.03 * t):.12f}\n" for t in (0.5, 1, 2, 3, 5, 7, 10, 15, 20, 30))
    )
    for name, bps in (("CPTY", 80.0), ("INV", 80.0), ("REF", 180.0)):
        (out / f"quotes_{name}.csv").write_text(
            "tenor_years,par_spread_bps,recovery\n" + "".join(f"{t:g},{bps:g},0.4\n" for t in TENORS)
        )
        (out / f"vol_{name}.csv").write_text("tenor_years,sigma_m\n5,0.5\n")
    (out / "correlation.txt").write_text(
        "[index_correlation]\n1.0\n\n[loadings]\nname_id, a_1\nCPTY, 0.4\nINV, 0.4\nREF, 0.4\n"
    )
    (out / "portfolio.csv").write_text(
        "deal_id,kind,reference_name,notional,maturity_years,contract_spread_bps,recovery,direction\n"
        "D1,cds,REF,100,10,par,0,long\n"
    )
    header = "rating," + ",".join(RATINGS) + "\n"
    rows = "".join(r + "," + ",".join(f"{v:.4f}" for v in row) + "\n" for r, row in zip(RATINGS, QUARTERLY_TRANSITION))
    (out / "transition.csv").write_text(header + rows)
    manifest = out / "manifest.txt"
    manifest.write_text(
        "# sample run: A-rated counterparty and investor, 10y CDS on a BBB name\n"
        "counterparty = CPTY\ninvestor = INV\n"
        "discount = discount.csv\ncorrelation = correlation.txt\nportfolio = portfolio.csv\n"
        "quotes.CPTY = quotes_CPTY.csv\nquotes.INV = quotes_INV.csv\nquotes.REF = quotes_REF.csv\n"
        "vol.CPTY = vol_CPTY.csv\nvol.INV = vol_INV.csv\nvol.REF = vol_REF.csv\n"
        "recovery.CPTY = 0\nrecovery.INV = 0\n"
        "rating.CPTY = A\nrating.INV = A\n"
        "transition = transition.csv\n"
        "scenarios = 5000\nseed = 1\nmode = conditional\nnetting = on\nkappa = 0\ntime_step = 0.25\nthreads = 1\n"
        "out = out\n"
        "default_corr.pairs = A:A, BBB:BBB\n"
        "default_corr.rho = 0.1321, 0.1428, 0.2874, 0.30\n"
        "default_corr.horizons = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10\n"
        "default_corr.quotes.A = quotes_CPTY.csv\n"
        "default_corr.quotes.BBB = quotes_REF.csv\n"
        "default_corr.target = A:0.2874:0.0077; BBB:0.1321:0.0038; BB:0.1428:0.0161\n"
        "default_corr.scenarios = 100000\n"
    )
    return manifest
