import math

import numpy as np
import pytest

from dtdcva.dtd import DtdState
from dtdcva.errors import DomainError, ValidationError
from dtdcva.market_data import DiscountCurve
from dtdcva.pricing import (DealBook, Instrument, cds_mtm, cds_par_spread, deal_value, load_portfolio,
                            market_survival, net_exposure, portfolio_exposure, resolve_par_spreads, risky_zcb,
                            scenario_survival, spread_approx)


def test_risky_zcb():
    assert risky_zcb(0.0, 0.4, 0.9) == 0.9
    assert risky_zcb(0.3, 1.0, 0.9) == 0.9
    assert risky_zcb(0.2, 0.4, 0.9) == pytest.approx(0.792, rel=1e-15)
    with pytest.raises(DomainError):
        risky_zcb(1.2, 0.4, 0.9)


def test_par_spread_trivial(flat_disc):
    assert cds_par_spread(0.0, 5.0, lambda t: 1.0, flat_disc, 0.4) == 0.0
    surv = lambda t: math.exp(-0.02 * t)
    assert cds_par_spread(0.0, 5.0, surv, flat_disc, 1.0) == 0.0


def test_par_spread_flat_hazard():
    h, R, r = 0.01, 0.4, 0.03
    disc = DiscountCurve.flat(r)
    surv = lambda t: math.exp(-h * t)
    s = cds_par_spread(0.0, 5.0, surv, disc, R)
    # hand-assembled quarterly legs
    T = np.arange(1, 21) * 0.25
    S = np.exp(-h * T)
    Sp = np.concatenate([[1.0], S[:-1]])
    D = np.exp(-r * T)
    ref = (1 - R) * np.sum(D * (Sp - S)) / np.sum(D * 0.25 * 0.5 * (Sp + S))
    assert s == pytest.approx(ref, rel=1e-13)
    # continuous legs give exactly (1 - R) h; the quarterly grid is within a few bp of relative error
    assert s == pytest.approx((1 - R) * h, rel=5e-3)


@pytest.fixture
def ref_name(a_name):
    return a_name


def test_cds_mtm_identities(ref_name, flat_disc):
    deal = resolve_par_spreads([Instrument("D", "cds", ref_name.name, 10.0, 5.0, 0.4)],
                               {ref_name.name: ref_name}, flat_disc)[0]
    assert abs(cds_mtm(deal, 0.0, market_survival(ref_name), flat_disc)) < 1e-14
    # no default risk: only the premium leg remains
    dates, acc = deal.schedule(0.0)
    ann = float(np.sum(flat_disc.df(dates) * acc))
    assert cds_mtm(deal, 0.0, lambda t: 1.0, flat_disc) == pytest.approx(-deal.contract_spread * ann * 10.0, rel=1e-14)
    short = Instrument("S", "cds", ref_name.name, 10.0, 5.0, 0.4, -1, deal.contract_spread)
    st = DtdState(ref_name.name, 0.6 * ref_name.params.y0, 1.0)
    surv = scenario_survival(ref_name, st)
    assert cds_mtm(short, 1.0, surv, flat_disc) == -cds_mtm(deal, 1.0, surv, flat_disc)
    with pytest.raises(DomainError):
        cds_mtm(deal, 5.0, surv, flat_disc)


def test_exposure_examples():
    assert net_exposure([5.0], True) == (5.0, 0.0)
    assert net_exposure([5.0], False) == (5.0, 0.0)
    assert net_exposure([5.0, -3.0], True) == (2.0, 0.0)
    assert net_exposure([5.0, -3.0], False) == (5.0, 3.0)
    pos, neg = net_exposure(np.zeros((4, 0)), True)
    assert pos.shape == (4,) and not pos.any() and not neg.any()


def test_portfolio_exposure_netting(ref_name, flat_disc):
    names = {ref_name.name: ref_name}
    deals = resolve_par_spreads([Instrument("L", "cds", ref_name.name, 10.0, 5.0, 0.4),
                                 Instrument("S", "cds", ref_name.name, 4.0, 3.0, 0.4, -1)], names, flat_disc)
    states = {ref_name.name: DtdState(ref_name.name, 0.5 * ref_name.params.y0, 1.0)}
    net = portfolio_exposure(deals, 1.0, states, names, flat_disc, True)
    gross = portfolio_exposure(deals, 1.0, states, names, flat_disc, False)
    assert gross[0] > net[0] > 0.0 and gross[1] > 0.0 and net[1] == 0.0
    assert portfolio_exposure([], 1.0, states, names, flat_disc) == (0.0, 0.0)


def test_settlement_values(ref_name, flat_disc):
    dead = DtdState(ref_name.name, 0.0, 2.0, False)
    cds = Instrument("C", "cds", ref_name.name, 10.0, 5.0, 0.4, 1, 0.01)
    bond = Instrument("B", "zcb", ref_name.name, 10.0, 5.0, 0.4, 1)
    assert deal_value(cds, 2.0, dead, ref_name, flat_disc) == pytest.approx(6.0)
    assert deal_value(bond, 2.0, dead, ref_name, flat_disc) == pytest.approx(4.0 * math.exp(-0.09))
    assert deal_value(cds, 2.0, dead, ref_name, flat_disc, defaulted_now=False) == 0.0


def test_dealbook_matches_scalar_pricing(ref_name, flat_disc):
    deals = resolve_par_spreads([Instrument("C", "cds", ref_name.name, 10.0, 4.0, 0.3, 1),
                                 Instrument("B", "zcb", ref_name.name, 7.0, 3.0, 0.4, -1)],
                                {ref_name.name: ref_name}, flat_disc)
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    book = DealBook(deals, [ref_name], flat_disc, grid)
    ys = np.array([0.2, 1.0, 1.7]) * ref_name.params.y0
    for b, t in enumerate(grid):
        vals = book.values(b, ys[:, None], np.zeros((3, 1), dtype=bool))
        for i, y in enumerate(ys):
            st = DtdState(ref_name.name, y, t)
            ref = [deal_value(d, t, st, ref_name, flat_disc) for d in deals]
            assert vals[i] == pytest.approx(ref, rel=1e-12, abs=1e-13)
    settle = book.values(1, np.zeros((1, 1)), np.ones((1, 1), dtype=bool))
    assert settle[0, 0] == pytest.approx(7.0)


def test_spread_proxy():
    assert spread_approx(0.05, 0.4, 2.0) == pytest.approx(0.015)
    with pytest.raises(DomainError):
        spread_approx(0.05, 0.4, 0.0)


def test_load_portfolio(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("deal_id,kind,reference_name,notional,maturity_years,contract_spread_bps,recovery,direction\n"
                 "D1,CDS,REF,100,10,par,0.4,long\nD2,zcb,REF,50,5,0,0.4,short\n")
    d1, d2 = load_portfolio(p)
    assert d1.contract_spread is None and d1.kind == "cds" and d2.direction == -1
    p.write_text("deal_id,kind,reference_name,notional,maturity_years,contract_spread_bps,recovery,direction\n"
                 "D1,swap,REF,100,10,par,0.4,long\n")
    with pytest.raises(ValidationError, match="unknown kind"):
        load_portfolio(p)
