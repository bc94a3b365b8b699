import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from dtdcva.copula import FactorLoadings, build_structure
from dtdcva.engine import (CONTINUE, STOP, CvaInputs, TransitionMatrix, default_correlation,
                           default_correlation_analytic, joint_bucket_weights, rating_trigger_step, run,
                           run_scenario_conditional, run_scenario_unconditional, simulate_default_correlation)
from dtdcva.errors import ValidationError
from dtdcva.pricing import Instrument, PartyConfig
from dtdcva.synthetic import table1_config, table1_setup, transition_matrix


def test_joint_weights_independent_and_limits():
    p1, p2 = 0.99, 0.98
    q1, q2 = -ndtri(0.5 * (1 - p1)), -ndtri(0.5 * (1 - p2))
    wI, wII = joint_bucket_weights(p1, p2, q1, q2, 0.0)
    assert wI == pytest.approx((1 - p1) * p2, rel=1e-13)
    assert wII == pytest.approx(p1 * (1 - p2), rel=1e-13)
    p1 = 1.0 - 1e-15
    wI, _ = joint_bucket_weights(p1, p2, -ndtri(0.5e-15), q2, 0.5)
    assert wI < 2e-15


def test_joint_weights_against_mc():
    L21, p1, p2 = 0.5, 0.99, 0.98
    q1, q2 = -ndtri(0.5 * (1 - p1)), -ndtri(0.5 * (1 - p2))
    wI, wII = joint_bucket_weights(p1, p2, q1, q2, L21)
    r = np.random.default_rng(99)
    n, hitsI, hitsII = 10_000_000, 0, 0
    t1, t2 = ndtri(p1), ndtri(p2)
    for _ in range(10):
        z = r.standard_normal((n // 10, 2))
        y1 = z[:, 0]
        y2 = L21 * z[:, 0] + math.sqrt(1 - L21 * L21) * z[:, 1]
        hitsI += int(np.count_nonzero((y1 >= t1) & (y2 < t2)))
        hitsII += int(np.count_nonzero((y1 < t1) & (y2 >= t2)))
    for w, h in ((wI, hitsI), (wII, hitsII)):
        assert abs(h / n - w) <= 3 * math.sqrt(w * (1 - w) / n)


def test_rating_trigger_table():
    assert rating_trigger_step(0.1, 0.2, 0.5, 0.5, 1.0) == CONTINUE
    assert rating_trigger_step(0.9, 0.2, 0.5, 0.5, 1.0) == STOP
    assert rating_trigger_step(0.9, 0.2, 0.5, 0.5, -1.0) == CONTINUE
    assert rating_trigger_step(0.1, 0.9, 0.5, 0.5, -1.0) == STOP
    assert rating_trigger_step(0.1, 0.9, 0.5, 0.5, 1.0) == CONTINUE
    assert rating_trigger_step(0.9, 0.9, 0.5, 0.5, 0.0) == STOP


def test_no_breach_probabilities():
    tm = TransitionMatrix(("A", "B", "D"), np.array([[0.9, 0.08, 0.02], [0.1, 0.8, 0.1], [0, 0, 1.0]]))
    p = tm.no_breach_probs("A", "B", 3)
    assert p[0] == pytest.approx(0.9)
    # second step: from A only (B and D absorb)
    assert p[1] == pytest.approx(0.9)
    assert np.all(tm.no_breach_probs("B", "B", 2) == 0.0)
    with pytest.raises(ValidationError):
        TransitionMatrix(("A", "B"), np.array([[0.5, 0.4], [0.0, 1.0]]))
    m = transition_matrix()
    assert np.all(np.diff(m.no_breach_probs("A", "BB", 40)) <= 1e-12)


@pytest.fixture(scope="module")
def setup():
    return table1_setup()


def test_zero_exposure_and_full_recovery(setup):
    inputs, deals = setup
    for mode in ("conditional", "unconditional"):
        cfg = table1_config(300, mode, seed=3)
        assert np.all(run(cfg, inputs, []).cva_mean == 0.0)
        full = replace(inputs, parties=PartyConfig(1.0, 1.0, "A", "A"))
        rep = run(cfg, full, deals)
        assert np.all(rep.cva_mean == 0.0) and rep.total == 0.0


def test_one_bucket_desk_case(setup):
    inputs, _ = setup
    # recovery-one bond: value N D(t, T) whatever the reference does
    bond = Instrument("B", "zcb", "REF", 100.0, 5.0, 1.0, 1)
    cfg = replace(table1_config(1, "conditional", seed=1), grid=np.array([0.0, 1.0]))
    parties = PartyConfig(0.4, 0.4, "A", "A")
    inp = replace(inputs, parties=parties)
    got = run_scenario_conditional(cfg, inp, [bond], 0)
    cp, inv = inp.names[0], inp.names[1]
    pS1, pS2 = 1 - cp.curve.pd(1.0), 1 - inv.curve.pd(1.0)
    q1, q2 = -ndtri(0.5 * (1 - pS1)), -ndtri(0.5 * (1 - pS2))
    wI, _ = joint_bucket_weights(pS1, pS2, q1, q2, inp.structure.L21)
    E = 100.0 * math.exp(-0.03 * 4.0)
    assert got[0] == pytest.approx(0.6 * wI * E * math.exp(-0.03), rel=1e-9)


def test_unconditional_default_frequency():
    inputs, deals = table1_setup(loading=0.0)
    cfg = replace(table1_config(200_000, "unconditional", seed=8), grid=np.array([0.0, 1.0]))
    rep = run(cfg, inputs, deals)
    for cnt, name in ((rep.defaults_cpty[0], inputs.names[0]), (rep.defaults_inv[0], inputs.names[1])):
        p = name.curve.pd(1.0)
        assert abs(cnt / cfg.n_scenarios - p) <= 3 * math.sqrt(p * (1 - p) / cfg.n_scenarios)


def test_single_scenario_reproducible(setup):
    inputs, deals = setup
    cfg = table1_config(1, "conditional", seed=42)
    a = run(cfg, inputs, deals)
    b = run(cfg, inputs, deals)
    assert a.total == b.total and np.array_equal(a.cva_mean, b.cva_mean)
    row = run_scenario_conditional(cfg, inputs, deals, 0)
    assert row.sum() == pytest.approx(a.total, rel=1e-12)
    assert run_scenario_unconditional(cfg, inputs, deals, 0).shape == row.shape


def test_se_shrinks_with_scenarios(setup):
    inputs, deals = setup
    a = run(table1_config(4000, "conditional", seed=5), inputs, deals)
    b = run(table1_config(8000, "conditional", seed=5), inputs, deals)
    assert b.total_se / a.total_se == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_trigger_reduces_path_length(setup):
    inputs, deals = setup
    base = table1_config(2000, "conditional", seed=6)
    trig = replace(base, trigger_rating="BB", transition=transition_matrix())
    r0, r1 = run(base, inputs, deals), run(trig, inputs, deals)
    assert r0.trigger_stops.sum() == 0 and r1.trigger_stops.sum() > 0
    # one trigger stop per stopped path at most
    assert r1.trigger_stops.sum() <= base.n_scenarios


def test_config_validation(setup):
    inputs, _ = setup
    with pytest.raises(ValidationError):
        table1_config(0, "conditional")
    with pytest.raises(ValidationError):
        table1_config(10, "both")
    with pytest.raises(ValidationError):
        replace(table1_config(10, "conditional"), trigger_rating="BB")
    with pytest.raises(ValidationError):
        CvaInputs(inputs.names[::-1], inputs.structure, inputs.disc, inputs.parties)


def test_default_correlation_limits():
    assert default_correlation_analytic(0.02, 0.05, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert default_correlation(0.02, 0.02, 1.0) == 1.0
    assert default_correlation_analytic(0.02, 0.02, 0.999999) == pytest.approx(1.0, abs=2e-2)
    est = simulate_default_correlation(0.05, 0.03, 0.0, 200_000, seed=3)
    assert abs(est.value) <= 3 * est.se
    with pytest.raises(ValueError):
        default_correlation(0.02, 0.02, 0.3, mode="other")


@pytest.mark.slow
def test_table1_count_ladder(setup):
    # estimates at 5K and 10K scenarios scatter around the 100K estimate
    inputs, deals = setup
    ref = run(table1_config(100_000, "conditional", seed=1), inputs, deals)
    for n in (5_000, 10_000):
        r = run(table1_config(n, "conditional", seed=1 + n), inputs, deals)
        assert abs(r.total - ref.total) <= 3 * math.hypot(r.total_se, ref.total_se)
