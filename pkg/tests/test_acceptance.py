"""Acceptance criteria, one test each; every test prints a single pass/fail line."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from exchange_entropy.axioms import (
    SystemState,
    calibrated_entropy,
    execute_plan,
    flanking_states,
    plan_transition,
    run_monotonicity_scenario,
    simulate_joined_flow,
)
from exchange_entropy.diagnostics import batch_means_stderr
from exchange_entropy.dynamics import (
    equal_split_state,
    financial_contact_session,
    simulate,
    stationary_state,
    trading_contact_session,
)
from exchange_entropy.economy import CobbDouglas, make_economy
from exchange_entropy.exceptions import PlanningError
from exchange_entropy.partition import (
    CanonicalPoint,
    EntropyModel,
    coolness,
    equilibrium_amounts,
    estimate_coolness_from_pot,
    free_energy,
    good_values,
    legendre_entropy,
    log_partition,
)
from exchange_entropy.sampling import sample_redistribution

pytestmark = pytest.mark.slow


def money_economy(alphas):
    n = len(alphas)
    return make_economy([CobbDouglas((float(a),)) for a in alphas], rate=1 / max(n - 1, 1))


def test_criterion_01_dirichlet_moments(acceptance_line):
    alpha = np.array([1.0, 2.0, 3.0, 4.0])
    econ = money_economy(alpha)
    n_samples = 100_000
    state = stationary_state(econ, {(0, (0,)): 10.0}, 1)
    traj = simulate(econ, state, 1000 + 4 * n_samples, 2, burn_in=1000, thin=4, record_events=False)
    shares = traj.money_shares()
    A = alpha.sum()
    worst = 0.0
    for i in range(4):
        s = shares[:, i]
        m1 = alpha[i] / A
        m2 = alpha[i] * (alpha[i] + 1) / (A * (A + 1))
        worst = max(worst, abs(s.mean() - m1) / batch_means_stderr(s),
                    abs((s**2).mean() - m2) / batch_means_stderr(s**2))
    ok = traj.n_samples >= n_samples and worst < 3
    acceptance_line(1, "Dirichlet(1,2,3,4) share moments",
                    ok, f"worst deviation {worst:.2f} stderr at {traj.n_samples} samples")
    assert ok


def test_criterion_02_redistribution_beta_law(acceptance_line):
    rng = np.random.default_rng(2)
    pairs = [(0.5, 0.5), (0.3, 2.0), (1.0, 1.0), (2.0, 3.0), (5.0, 0.8)]
    pvalues = []
    for ai, aj in pairs:
        ui, uj = CobbDouglas((ai,)), CobbDouglas((aj,))
        x = np.empty(5000)
        for k in range(len(x)):
            pool = rng.uniform(0.5, 5.0)
            a, _ = sample_redistribution(ui, uj, [pool * 0.5], [pool * 0.5], [0], rng)
            x[k] = a[0] / pool
        pvalues.append(stats.kstest(x, stats.beta(ai, aj).cdf).pvalue)
    ok = min(pvalues) > 0.01
    acceptance_line(2, "pairwise Beta redistribution law",
                    ok, "KS p-values " + ", ".join(f"{p:.3f}" for p in pvalues))
    assert ok


def test_criterion_03_financial_equilibration(acceptance_line):
    # exponent sums 10 and 30 (money-only, alpha = 2): joint Dirichlet gives E[M_A] = 100 * 10 / 40
    first, second = money_economy([2.0] * 5), money_economy([2.0] * 15)
    rng = np.random.default_rng(3)
    s1 = stationary_state(first, {(0, (0,)): 50.0}, rng)
    s2 = stationary_state(second, {(0, (0,)): 50.0}, rng)
    long = simulate_joined_flow(first, s1, second, s2, 20 * 50_000, rng, burn_in=20 * 500)
    mean_ok = abs(long.mean_money - 25.0) < 3 * long.stderr

    beta_a = coolness(EntropyModel.from_economy(first), EntropyModel.from_economy(first).macro(50.0))
    beta_b = coolness(EntropyModel.from_economy(second), EntropyModel.from_economy(second).macro(50.0))
    expected_sign = -1 if beta_b > beta_a else 1
    agree = 0
    for ss in np.random.SeedSequence(33).spawn(100):
        r = np.random.default_rng(ss)
        a = stationary_state(first, {(0, (0,)): 50.0}, r)
        b = stationary_state(second, {(0, (0,)): 50.0}, r)
        res = simulate_joined_flow(first, a, second, b, 4 * 20, r, burn_in=0)
        agree += np.sign(res.early_flow) == expected_sign
    ok = mean_ok and agree >= 99
    acceptance_line(3, "financial equilibration between joined economies", ok,
                    f"E[M_A] = {long.mean_money:.3f} +- {long.stderr:.3f} (oracle 25); "
                    f"initial flow sign A->B in {agree}/100 runs")
    assert ok


def test_criterion_04_pot_coolness(acceptance_line):
    n = 50
    econ = money_economy([2.0] * n)
    rng = np.random.default_rng(4)
    state = stationary_state(econ, {(0, (0,)): 200.0}, rng)
    traj, _ = financial_contact_session(econ, state, 0.0, n * 200 + n * 60_000, rng, burn_in=n * 200,
                                        thin=n, record_events=False, keep_snapshots=False)
    est = estimate_coolness_from_pot(traj.pot_series)
    exact = 99 / 200
    rel = abs(est.beta - exact) / exact
    ok = rel < 0.05 and est.ess >= 1e4
    acceptance_line(4, "coolness from pot occupancy", ok,
                    f"beta = {est.beta:.4f} +- {est.stderr:.4f} vs {exact} ({100 * rel:.2f}%), ESS {est.ess:.0f}")
    assert ok


def _complements_quadrature(alpha, beta, nu):
    L = 40 / min(beta, nu)

    def f(g, m):
        return min(m, g) ** (alpha - 1) * math.exp(-beta * m - nu * g)

    # split along m = g so each piece is smooth
    upper = integrate.dblquad(f, 0, L, lambda m: m, L, epsabs=0, epsrel=1e-11)[0]
    lower = integrate.dblquad(f, 0, L, 0, lambda m: m, epsabs=0, epsrel=1e-11)[0]
    return upper + lower


def test_criterion_05_complements_free_energy(acceptance_line):
    worst = 0.0
    for alpha in (1.5, 2.0, 3.0):
        model = EntropyModel.complements(alpha, 1)
        for beta in (0.5, 1.0, 2.0):
            for nu in (0.5, 1.0, 2.0):
                F = free_energy(model, CanonicalPoint(beta, nu))
                # the bare closed form omits the log Gamma(alpha) normalisation
                bare = (alpha - 1) * math.log(beta + nu) + math.log(beta) + math.log(nu)
                assert F == pytest.approx(bare - math.lgamma(alpha), rel=1e-14, abs=1e-14)
                z = _complements_quadrature(alpha, beta, nu)
                worst = max(worst, abs(math.exp(-F) - z) / z)
    log2 = free_energy(EntropyModel.complements(2.0, 10), CanonicalPoint(1.0, 1.0)) / 10
    ok = worst < 1e-6 and log2 == pytest.approx(math.log(2), rel=1e-15)
    acceptance_line(5, "complements free energy", ok,
                    f"max relative error {worst:.2e} over 27 grid points; F/N at alpha=2 = {float(log2)!r}")
    assert ok


def test_criterion_06_legendre_round_trip(acceptance_line):
    n, M = 100, 100.0
    model = EntropyModel.cobb_douglas(np.ones(n))
    res = legendre_entropy(model, model.macro(M))
    exact = (n - 1) * math.log(M) - math.lgamma(n)
    per_agent = abs(res.value - exact) / n
    back = model.vector(equilibrium_amounts(model, res.point))[0]
    closure = abs(back - M) / M
    ok = per_agent < 0.05 and closure < 1e-8
    acceptance_line(6, "Legendre round trip", ok,
                    f"per-agent gap {per_agent:.4f}, duality closure {closure:.1e}")
    assert ok


def test_criterion_07_trading_price_law(acceptance_line):
    n, mu = 20, 2.0
    econ = make_economy([CobbDouglas((1.0, 1.0))] * n, rate=1 / (n - 1))
    state = equal_split_state(econ, {(0, (0,)): 100.0, (1, (0,)): 0.0})
    traj = trading_contact_session(econ, state, mu, n * 500 + n * 40_000, 7, burn_in=n * 500, thin=n,
                                   record_events=False, keep_snapshots=False)
    m, g = traj.totals[:, 0], traj.totals[:, 1]
    sm, sg = batch_means_stderr(m), batch_means_stderr(g)
    model = EntropyModel.from_economy(econ)
    price = good_values(model, model.macro(m.mean(), g.mean()))[2][0]
    ok = abs(m.mean() - 50) < 3 * sm and abs(g.mean() - 25) < 3 * sg and abs(price / mu - 1) < 0.02
    acceptance_line(7, "trading contact price law", ok,
                    f"E[M] = {m.mean():.3f} +- {sm:.3f}, E[G] = {g.mean():.3f} +- {sg:.3f}, "
                    f"nu/beta = {price:.4f}")
    assert ok


def test_criterion_08_monotonicity(acceptance_line):
    seeds = np.random.SeedSequence(8).generate_state(100)
    results = [run_monotonicity_scenario(int(s), n_agents=50) for s in seeds]
    failed = [r.seed for r in results if not r.passed]
    worst = min((s for r in results for s in r.steps), key=lambda s: s.delta + s.tolerance)
    control = run_monotonicity_scenario(int(seeds[0]), n_agents=50, inject_wrong_sign=True)
    flagged = not control.passed and control.worst.action == "wrong_sign"
    ok = not failed and flagged
    acceptance_line(8, "log Z never decreases under trader actions", ok,
                    f"{len(results) - len(failed)}/100 scripts pass, tightest margin "
                    f"{worst.delta + worst.tolerance:.3f}; wrong-sign control "
                    f"{'flagged' if flagged else 'missed'} (delta {control.worst.delta:.1f})")
    assert ok


def test_criterion_09_planner(acceptance_line):
    n = 100
    econ = make_economy([CobbDouglas((2.0, 2.0))] * n, rate=1 / (n - 1))
    model = EntropyModel.from_economy(econ)
    rng = np.random.default_rng(9)
    errors, refused = [], 0
    pairs = 0
    while pairs < 20:
        a = model.macro(*(rng.uniform(0.5, 3.0, 2) * n))
        b = model.macro(*(rng.uniform(0.5, 3.0, 2) * n))
        la, lb = log_partition(model, a), log_partition(model, b)
        x, y = (SystemState(model, a), SystemState(model, b)) if lb > la else (
            SystemState(model, b), SystemState(model, a))
        plan = plan_transition(x, y)
        try:
            plan_transition(y, x)
        except PlanningError:
            refused += 1
        s0 = stationary_state(econ, {k: x.macro[k] for k in model.keys}, rng)
        res = execute_plan(econ, s0, plan, rng)
        target = model.vector(y.macro)
        errors.append(float(np.max(np.abs(model.vector(res.estimate) / target - 1))))
        pairs += 1
    worst = max(errors)
    ok = worst < 0.02 and refused == 20
    acceptance_line(9, "planner reaches accessible targets", ok,
                    f"worst relative miss {100 * worst:.2f}% over 20 pairs; reversed pairs refused {refused}/20")
    assert ok


def test_criterion_10_calibration_and_product_rule(acceptance_line):
    n = 30
    model = EntropyModel.cobb_douglas([[2.0, 2.0]] * n)
    ref = SystemState(model, model.macro(60.0, 60.0))
    fl = flanking_states(ref, 30.0)
    lo, hi = SystemState(model, fl.lower), SystemState(model, fl.upper)
    rng = np.random.default_rng(10)
    lz, cal = [], []
    while len(lz) < 50:
        s = SystemState(model, model.macro(*rng.uniform(20.0, 100.0, 2)))
        if fl.log_z[0] <= s.log_z <= fl.log_z[2]:
            lz.append(s.log_z)
            cal.append(calibrated_entropy(s, lo, hi))
    fit = stats.linregress(lz, cal)
    one_minus_r2 = 1 - fit.rvalue**2

    worst_ulp = 0.0
    for _ in range(50):
        na, nb = rng.integers(2, 30, 2)
        ea, eb = rng.uniform(1.0, 4.0, (na, 2)), rng.uniform(1.0, 4.0, (nb, 2))
        econ = make_economy([CobbDouglas(tuple(e)) for e in np.vstack([ea, eb])],
                            parts=[range(na), range(na, na + nb)], rate=1 / (na + nb - 1))
        joint = EntropyModel.from_economy(econ)
        tot = rng.uniform(1.0, 50.0, 4)
        vals = {k: tot[2 * k.parts[0] + k.good] for k in joint.keys}
        ma, mb = EntropyModel.cobb_douglas(ea), EntropyModel.cobb_douglas(eb)
        # every per-key constant of the joint model is bit-identical to the one of its part
        for q, k in enumerate(joint.keys):
            part = ma if k.parts == (0,) else mb
            assert joint.exponent_sums[q] == part.exponent_sums[k.good]
            assert joint.lgamma_sums[q] == part.lgamma_sums[k.good]
        both = log_partition(joint, joint.macro(*[vals[k] for k in joint.keys]))
        p1, p2 = log_partition(ma, ma.macro(tot[0], tot[1])), log_partition(mb, mb.macro(tot[2], tot[3]))
        # what remains is rounding of the two part sums and their addition
        worst_ulp = max(worst_ulp, abs(both - (p1 + p2)) / math.ulp(max(abs(p1), abs(p2), abs(both))))
    ok = one_minus_r2 < 1e-12 and worst_ulp <= 2
    acceptance_line(10, "calibration is affine; unconnected parts multiply", ok,
                    f"1 - R^2 = {one_minus_r2:.1e} over 50 states; product rule off by at most "
                    f"{worst_ulp:.1f} ulp of the largest term over 50 pairs")
    assert ok
