import json
import math

import numpy as np
import pytest
from scipy import stats

from exchange_entropy.diagnostics import autocorrelation_time, batch_means_stderr, effective_sample_size
from exchange_entropy.dynamics import (
    EventKind,
    Financial,
    equal_split_state,
    financial_contact_session,
    simulate,
    stationary_state,
    trading_contact_session,
)
from exchange_entropy.economy import (
    MONEY,
    CobbDouglas,
    Complements,
    MicroState,
    QuantityKey,
    conserved_quantities,
    make_economy,
)


def flat_money(n, rate=None):
    return make_economy([CobbDouglas((1.0,))] * n, rate=rate if rate else 1.0 / max(n - 1, 1))


def test_single_agent_has_no_events():
    econ = flat_money(1)
    state = MicroState(np.array([[3.0]]))
    traj = simulate(econ, state, 100, 0)
    assert traj.n_events == 0
    assert np.array_equal(traj.final.possessions, state.possessions)


def test_conservation_over_many_events():
    econ = make_economy([CobbDouglas((0.5, 2.0)), CobbDouglas((1.0, 1.0)), CobbDouglas((3.0, 0.7))] * 3)
    state = stationary_state(econ, {(0, (0,)): 123.456, (1, (0,)): 0.789}, 3)
    traj = simulate(econ, state, 100_000, 4, record_events=False, keep_snapshots=False)
    before = conserved_quantities(econ, state)
    after = conserved_quantities(econ, traj.final)
    for a, b in zip(before, after):
        assert b.total == pytest.approx(a.total, rel=1e-12)


def test_pairwise_event_conserves_bitwise():
    econ = make_economy([CobbDouglas((2.0, 1.5))] * 2)
    state = MicroState(np.array([[0.1, 0.7], [0.2, 1e-3]]))
    pool = state.possessions.sum(axis=0)
    traj = simulate(econ, state, 1, 9)
    assert np.all(traj.final.possessions.sum(axis=0) == pool)


def test_untradable_good_constant_per_part():
    econ = make_economy([CobbDouglas((2.0, 2.0))] * 6, parts=[[0, 1, 2], [3, 4, 5]],
                        tradable={(0, 1): {MONEY}}, rate=0.2)
    state = equal_split_state(econ, {(0, (0, 1)): 60.0, (1, (0,)): 9.0, (1, (1,)): 3.0})
    traj = simulate(econ, state, 5000, 1, burn_in=0, thin=1)
    # pairwise sums are exact; the three-term total only carries summation rounding
    assert np.allclose(traj.total_series((1, (0,))), 9.0, rtol=1e-14, atol=0)
    assert np.allclose(traj.total_series((1, (1,))), 3.0, rtol=1e-14, atol=0)


def test_determinism():
    econ = make_economy([CobbDouglas((2.0, 1.0))] * 5)
    state = equal_split_state(econ, {(0, (0,)): 5.0, (1, (0,)): 5.0})
    a = simulate(econ, state, 3000, 42)
    b = simulate(econ, state, 3000, 42)
    assert np.array_equal(a.final.possessions, b.final.possessions)
    assert np.array_equal(a.event_times, b.event_times)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_trajectory_layout_and_defaults():
    econ = flat_money(4)
    state = equal_split_state(econ, {(0, (0,)): 4.0})
    traj = simulate(econ, state, 1000, 0)
    assert traj.burn_in == 200 and traj.thin == 4
    assert traj.n_samples == (1000 - 200) // 4
    assert traj.totals.shape == (traj.n_samples, 1)
    assert len(traj.events) == 1000
    assert all(ev.kind == EventKind.AGENT_PAIR for ev in traj.events[:10])
    assert np.all(np.diff(traj.event_times) >= 0)
    header = traj.to_csv().splitlines()[0]
    assert header == "sample,event,time,g0@0"
    json.loads(traj.to_json())


def test_until_time_stops_early():
    econ = flat_money(3)
    state = equal_split_state(econ, {(0, (0,)): 3.0})
    traj = simulate(econ, state, 10_000, 0, until_time=5.0)
    assert traj.n_events < 10_000
    assert traj.time <= 5.0


def test_dirichlet_moments_n4():
    alpha = np.array([1.0, 2.0, 3.0, 4.0])
    econ = make_economy([CobbDouglas((a,)) for a in alpha], rate=1 / 3)
    state = stationary_state(econ, {(0, (0,)): 10.0}, 0)
    traj = simulate(econ, state, 200 + 4 * 20_000, 1, burn_in=200, record_events=False)
    shares = traj.money_shares()
    A = alpha.sum()
    for i in range(4):
        s = shares[:, i]
        assert abs(s.mean() - alpha[i] / A) < 3 * batch_means_stderr(s)
        m2 = alpha[i] * (alpha[i] + 1) / (A * (A + 1))
        assert abs((s**2).mean() - m2) < 3 * batch_means_stderr(s**2)


def test_stationarity_from_exact_draw():
    econ = make_economy([CobbDouglas((2.0, 1.0)), CobbDouglas((1.0, 3.0))] * 3, rate=0.2)
    state = stationary_state(econ, {(0, (0,)): 6.0, (1, (0,)): 6.0}, 5)
    traj = simulate(econ, state, 6 * 20_000, 6, burn_in=0, record_events=False)
    m = traj.snapshots[:, :, MONEY]
    half = len(m) // 2
    for i in range(6):
        a, b = m[:half, i], m[half:, i]
        se = math.hypot(batch_means_stderr(a), batch_means_stderr(b))
        assert abs(a.mean() - b.mean()) < 3 * se


def test_detailed_balance_two_agents():
    econ = make_economy([CobbDouglas((2.0,)), CobbDouglas((3.0,))])
    state = MicroState(np.array([[0.5], [0.5]]))
    traj = simulate(econ, state, 60_000, 11, burn_in=0, thin=1, record_events=False)
    x = traj.snapshots[:, 0, MONEY]
    bins = np.minimum((x * 5).astype(int), 4)
    C = np.zeros((5, 5))
    np.add.at(C, (bins[:-1], bins[1:]), 1)
    for a in range(5):
        for b in range(a + 1, 5):
            assert abs(C[a, b] - C[b, a]) <= 4 * math.sqrt(C[a, b] + C[b, a] + 1)


def test_complements_dynamics_conserve():
    econ = make_economy([Complements(2.0)] * 4, rate=1 / 3)
    state = equal_split_state(econ, {(0, (0,)): 4.0, (1, (0,)): 8.0})
    traj = simulate(econ, state, 2000, 3, record_events=False)
    assert traj.final_totals() == pytest.approx([4.0, 8.0], rel=1e-12)


# -- trader sessions -------------------------------------------------------------


def test_financial_session_conserves_money_plus_pot():
    econ = make_economy([CobbDouglas((2.0,))] * 10, rate=1 / 9)
    state = equal_split_state(econ, {(0, (0,)): 20.0})
    traj, pot = financial_contact_session(econ, state, 5.0, 5000, 2)
    assert pot >= 0
    assert traj.final_totals()[0] + pot == pytest.approx(25.0, rel=1e-12)
    kinds = {ev.kind for ev in traj.events}
    assert EventKind.TRADER_FINANCIAL in kinds


def test_financial_session_needs_simple_economy():
    econ = make_economy([CobbDouglas((2.0,))] * 2, money_part=None)
    with pytest.raises(ValueError):
        simulate(econ, equal_split_state(econ, {(0, (0,)): 1.0}), 10, 0, session=Financial(1.0))


def test_zero_pot_takes_its_stationary_share():
    # the flat pot joins the Dirichlet split: economy keeps M A / (A + 1) on average
    econ = make_economy([CobbDouglas((2.0,))] * 10, rate=1 / 9)
    state = stationary_state(econ, {(0, (0,)): 20.0}, 3)
    traj, _ = financial_contact_session(econ, state, 0.0, 500 + 10 * 20_000, 4, burn_in=500,
                                        record_events=False)
    m = traj.totals[:, 0]
    assert abs(m.mean() - 20.0 * 20 / 21) < 3 * batch_means_stderr(m)


def test_pot_drains_into_economy():
    # pot / (M + M_T) ~ Beta(1, 50): P(economy >= 95) = 1 - 0.95**50, P(economy >= 90) = 1 - 0.9**50
    n = 50
    econ = flat_money(n)
    ss = np.random.SeedSequence(77).spawn(200)
    finals = []
    for child in ss:
        rng = np.random.default_rng(child)
        state = stationary_state(econ, {(0, (0,)): 50.0}, rng)
        traj, _ = financial_contact_session(econ, state, 50.0, 2000, rng, record_events=False,
                                            keep_snapshots=False)
        finals.append(traj.final_totals()[0])
    finals = np.array(finals)
    assert np.mean(finals >= 90) >= 0.99
    p95 = 1 - 0.95**50
    frac = np.mean(finals >= 95)
    assert abs(frac - p95) < 3 * math.sqrt(p95 * (1 - p95) / len(finals))


def test_trading_session_budget_and_beta_law():
    econ = make_economy([CobbDouglas((2.0, 3.0))])
    state = MicroState(np.array([[6.0, 2.0]]))
    mu = 2.0
    traj = trading_contact_session(econ, state, mu, 20_000, 8, burn_in=0, thin=1, record_events=False)
    snaps = traj.snapshots[:, 0, :]
    W = 10.0
    assert np.allclose(snaps[:, 0] + mu * snaps[:, 1], W, rtol=1e-12)
    assert stats.kstest(mu * snaps[:, 1] / W, stats.beta(3.0, 2.0).cdf).pvalue > 0.01


def test_trading_session_restricted_parts():
    econ = make_economy([CobbDouglas((2.0, 2.0))] * 4, parts=[[0, 1], [2, 3]], rate=1 / 3)
    state = equal_split_state(econ, {(0, (0,)): 4.0, (0, (1,)): 4.0, (1, (0,)): 4.0, (1, (1,)): 4.0})
    traj = trading_contact_session(econ, state, 1.5, 2000, 1, parts=(0,))
    untouched = traj.final_totals()[[k == QuantityKey(0, (1,)) for k in traj.keys].index(True)]
    assert untouched == pytest.approx(4.0, rel=1e-14)


# -- diagnostics ------------------------------------------------------------------


def test_diagnostics_on_ar1():
    rng = np.random.default_rng(0)
    phi = 0.8
    x = np.empty(50_000)
    x[0] = 0
    eps = rng.normal(size=len(x))
    for t in range(1, len(x)):
        x[t] = phi * x[t - 1] + eps[t]
    tau = autocorrelation_time(x)
    assert tau == pytest.approx((1 + phi) / (1 - phi), rel=0.15)
    assert effective_sample_size(x) == pytest.approx(len(x) / tau)
    se = batch_means_stderr(x)
    exact = math.sqrt(tau / (1 - phi**2) / len(x))
    assert se == pytest.approx(exact, rel=0.35)


def test_batch_means_needs_two_samples():
    with pytest.raises(ValueError):
        batch_means_stderr([1.0])
