import math

import numpy as np
import pytest
from hypothesis import assume, example, given, settings, strategies as st
from scipy.special import ndtr

from dtdcva.errors import ArbitrageError, DegenerateCurveError, DomainError, ValidationError
from dtdcva.market_data import (CdsQuoteSet, DiscountCurve, MarketPdCurve, bootstrap_pd_curve, bucket_variance,
                                effective_time, load_cds_quotes, load_discount_curve, load_spread_vol,
                                read_table, reprice_quotes)
from dtdcva.synthetic import flat_quotes


def test_discount_curve_log_linear():
    d = DiscountCurve(np.array([1.0, 2.0]), np.array([0.97, 0.93]))
    assert d.df(0.0) == 1.0
    assert d.df(1.5) == pytest.approx(math.sqrt(0.97 * 0.93), rel=1e-14)
    # last forward rate carries on
    assert d.df(3.0) == pytest.approx(0.93 * 0.93 / 0.97, rel=1e-14)
    assert d.forward_df(1.0, 2.0) == pytest.approx(0.93 / 0.97, rel=1e-14)
    with pytest.raises(ValidationError):
        DiscountCurve(np.array([1.0, 2.0]), np.array([0.97, 1.2]))


def test_zero_spread_gives_zero_pd(flat_disc):
    c = bootstrap_pd_curve(flat_quotes(0.0), flat_disc)
    assert np.all(c.pds == 0.0)


@pytest.mark.parametrize("rate", [0.0, 0.03])
def test_bootstrap_round_trip(rate):
    disc = DiscountCurve.flat(rate)
    q = flat_quotes(100.0, 0.4)
    c = bootstrap_pd_curve(q, disc)
    assert np.max(np.abs(reprice_quotes(c, q, disc) - q.par_spreads)) < 1e-10 * 0.01
    # flat quotes imply a near-flat hazard close to S / (1 - R)
    assert np.allclose(c.hazards, 0.01 / 0.6, rtol=0.02)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=5.0, max_value=800.0), min_size=6, max_size=6).map(sorted),
       st.floats(min_value=0.0, max_value=0.8))
@example([5.0, 5.0, 5.0, 5.0, 5.0, 651.0], 0.5)  # survival ~1e-10 at 10y
def test_bootstrap_round_trip_upward_curves(spreads, recovery):
    disc = DiscountCurve.flat(0.02)
    q = CdsQuoteSet(np.array([1.0, 2, 3, 5, 7, 10]), np.array(spreads) * 1e-4, recovery)
    try:
        c = bootstrap_pd_curve(q, disc)
    except ArbitrageError:
        # steep final quotes can exceed the largest attainable par spread
        assume(False)
    assert np.max(np.abs(reprice_quotes(c, q, disc) / q.par_spreads - 1.0)) < 1e-10
    assert np.all(np.diff(c.pds) > 0.0)


def test_full_recovery_is_arbitrage(flat_disc):
    with pytest.raises(ArbitrageError):
        bootstrap_pd_curve(flat_quotes(100.0, 1.0), flat_disc)


def test_inverted_curve_needing_negative_hazard(flat_disc):
    q = CdsQuoteSet(np.array([1.0, 2.0]), np.array([0.05, 0.001]), 0.4)
    with pytest.raises(ArbitrageError):
        bootstrap_pd_curve(q, flat_disc)


def test_pd_curve_interpolation():
    c = MarketPdCurve(np.array([1.0, 3.0]), np.array([0.02, 0.08]))
    assert c.times[0] == 0.0 and c.pd(0.0) == 0.0
    s1, s3 = 0.98, 0.92
    assert c.survival(2.0) == pytest.approx(math.sqrt(s1 * s3), rel=1e-14)
    h = math.log(s1 / s3) / 2.0
    assert c.survival(5.0) == pytest.approx(s3 * math.exp(-2.0 * h), rel=1e-14)
    with pytest.raises(ArbitrageError):
        MarketPdCurve(np.array([1.0, 2.0]), np.array([0.05, 0.04]))


def test_effective_time_closed_forms():
    c1 = MarketPdCurve(np.array([1.0]), np.array([2.0 * ndtr(-1.0)]))
    assert effective_time(c1, 1.0, 1.0) == pytest.approx(1.0, rel=1e-14)
    c2 = MarketPdCurve(np.array([1.0]), np.array([2.0 * ndtr(-2.0)]))
    assert effective_time(c2, 1.0, 1.0) == pytest.approx(0.25, rel=1e-14)
    assert effective_time(c2, 2.0, 1.0) == pytest.approx(4.0 * effective_time(c2, 1.0, 1.0), rel=1e-15)
    assert effective_time(c2, 1.0, 0.0) == 0.0


def test_bucket_variance_zero_time_and_telescoping(bbb_curve):
    y0 = 5.0
    assert bucket_variance(bbb_curve, y0, 0.0, 1.0) == effective_time(bbb_curve, y0, 1.0)
    d31 = bucket_variance(bbb_curve, y0, 1.0, 3.0)
    d21 = bucket_variance(bbb_curve, y0, 1.0, 2.0)
    d32 = bucket_variance(bbb_curve, y0, 2.0, 3.0)
    assert d31 == pytest.approx(d21 + d32, rel=1e-14)


def test_bucket_variance_degenerate():
    c = MarketPdCurve(np.array([1.0, 2.0]), np.array([0.02, 0.02]))
    with pytest.raises(DegenerateCurveError):
        bucket_variance(c, 3.0, 1.0, 2.0)
    with pytest.raises(DomainError):
        bucket_variance(c, 3.0, 2.0, 1.0)
    zero = MarketPdCurve(np.array([1.0]), np.array([0.0]))
    with pytest.raises(DegenerateCurveError, match="t = 1"):
        effective_time(zero, 3.0, 1.0)


def test_loaders(tmp_path):
    (tmp_path / "q.csv").write_text("# quotes\nTenor_Years,par_spread_bps,recovery\n1,50,0.4\n5,100,0.4\n")
    q = load_cds_quotes(tmp_path / "q.csv", "X")
    assert np.allclose(q.par_spreads, [0.005, 0.01]) and q.recovery == 0.4
    (tmp_path / "d.txt").write_text("time_years discount_factor\n1 0.97\n2 0.94\n")
    assert load_discount_curve(tmp_path / "d.txt").df(2.0) == pytest.approx(0.94)
    (tmp_path / "v.csv").write_text("tenor_years,sigma_m\n3,0.4\n5,0.5\n")
    v = load_spread_vol(tmp_path / "v.csv")
    assert (v.tenor, v.sigma_m) == (5.0, 0.5)
    (tmp_path / "bad.csv").write_text("tenor_years,par_spread_bps\n1,50\n")
    with pytest.raises(ValidationError, match="recovery"):
        load_cds_quotes(tmp_path / "bad.csv")
    (tmp_path / "ragged.csv").write_text("a,b\n1\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_table(tmp_path / "ragged.csv")
    with pytest.raises(ValidationError, match="missing"):
        read_table(tmp_path / "nope.csv")


@pytest.mark.parametrize("last_bps", [655.0, 656.0])
def test_unattainable_final_quote_is_arbitrage(last_bps):
    disc = DiscountCurve.flat(0.02)
    q = CdsQuoteSet(np.array([1.0, 2, 3, 5, 7, 10]), np.array([5, 5, 5, 5, 5, last_bps]) * 1e-4, 0.5)
    with pytest.raises(ArbitrageError):
        bootstrap_pd_curve(q, disc)
