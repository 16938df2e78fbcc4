"""Executable checks of the ordering axioms and the entropy construction.

Each check pairs a simulation with a closed-form or numeric oracle.  The
conventions are: coolness comparisons use a relative band of 1e-6,
``log Z`` comparisons a band of 1e-9 per agent, and Monte Carlo assertions
three standard errors.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, optimize

from .diagnostics import batch_means_stderr
from .dynamics import simulate, stationary_state, trading_contact_session
from .economy import (
    MONEY,
    CobbDouglas,
    Economy,
    MacroState,
    MicroState,
    conserved_keys,
    macro_state_of,
    make_economy,
    scale_economy,
    scale_state,
    set_contact,
)
from .exceptions import AssumptionError, ConstructionError, DomainError, PlanningError
from .partition import (
    EntropyModel,
    coolness,
    equilibrium_amounts,
    good_values,
    log_partition,
    log_partition_gradient,
)

BETA_RTOL = 1e-6
LOGZ_BAND = 1e-9
MC_SIGMAS = 3.0
REPORT_SCHEMA = "exchange-axioms-report/1"


# --------------------------------------------------------------------------
# states and actions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemState:
    """A macro-state together with the model that prices it."""

    model: EntropyModel
    macro: MacroState

    @property
    def log_z(self) -> float:
        return log_partition(self.model, self.macro)

    @property
    def band(self) -> float:
        return LOGZ_BAND * self.model.agent_count


def _as_system(x) -> SystemState:
    if isinstance(x, SystemState):
        return x
    model, macro = x
    return SystemState(model, macro)


@dataclass(frozen=True)
class StatePair:
    """Two systems compared on a common set of goods (clones allowed)."""

    first: SystemState
    second: SystemState

    def __post_init__(self):
        ga = {k.good for k in self.first.model.keys}
        gb = {k.good for k in self.second.model.keys}
        if ga != gb:
            raise DomainError(f"incompatible good sets {sorted(ga)} and {sorted(gb)}")


@dataclass(frozen=True)
class AddMoney:
    """Give money to the economy.  ``plane`` = (normal, value) tops up to a support plane."""

    amount: float
    plane: tuple | None = None


@dataclass(frozen=True)
class TradeAtPrice:
    """Trading contact at posted prices ``{good: price}``; ``target`` is the analytic landing point."""

    prices: Mapping
    target: MacroState | None = None

    @property
    def goods(self) -> tuple:
        return tuple(sorted(self.prices))


@dataclass(frozen=True)
class MakeContact:
    part_a: int
    part_b: int
    goods: tuple


@dataclass(frozen=True)
class BreakContact:
    part_a: int
    part_b: int
    goods: tuple


def action_to_dict(action) -> dict:
    if isinstance(action, AddMoney):
        d = {"action": "add_money", "amount": action.amount}
        if action.plane is not None:
            d["plane"] = {"normal": list(action.plane[0]), "value": action.plane[1]}
        return d
    if isinstance(action, TradeAtPrice):
        d = {"action": "trade_at_price", "prices": {str(g): p for g, p in sorted(action.prices.items())}}
        if action.target is not None:
            d["target"] = action.target.to_dict()
        return d
    name = "make_contact" if isinstance(action, MakeContact) else "break_contact"
    return {"action": name, "parts": [action.part_a, action.part_b], "goods": list(action.goods)}


@dataclass
class TransitionPlan:
    """Ordered trader actions with the analytic ``log Z`` gain of each."""

    start: SystemState
    target: SystemState
    steps: list = field(default_factory=list)
    expected_delta: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def to_dict(self) -> dict:
        return {
            "start": self.start.macro.to_dict(),
            "target": self.target.macro.to_dict(),
            "steps": [
                dict(action_to_dict(a), expected_delta_log_z=d)
                for a, d in zip(self.steps, self.expected_delta)
            ],
        }


# --------------------------------------------------------------------------
# ordering
# --------------------------------------------------------------------------


def accessible(x, y) -> str:
    """Adiabatic-accessibility verdict from ``x`` to ``y``.

    ``forward`` means y is reachable from x only, ``backward`` the reverse,
    ``both`` that the two are equivalent within the band.
    """
    pair = StatePair(_as_system(x), _as_system(y))
    a, b = pair.first, pair.second
    if a.model.family != b.model.family or a.model.agent_count != b.model.agent_count:
        raise DomainError("accessibility compares states of the same economy family and size")
    lx, ly = a.log_z, b.log_z
    if not (math.isfinite(lx) and math.isfinite(ly)):
        return "neither"
    band = a.band
    if abs(ly - lx) <= band:
        return "both"
    return "forward" if ly > lx else "backward"


# --------------------------------------------------------------------------
# planning
# --------------------------------------------------------------------------


def _landing(model: EntropyModel, weights: np.ndarray, value: float) -> np.ndarray:
    """Maximiser of ``log Z`` on the plane ``weights . P = value``."""
    if model.family == "cobb_douglas":
        a1 = model.exponent_sums - 1
        if np.any(a1 <= 0):
            raise DomainError("plane maximiser needs every exponent sum above one")
        return value * a1 / (weights * a1.sum())
    idx = list(range(len(model.keys)))

    def gap(log_beta):
        point = model.point_from_vector(math.exp(log_beta) * weights)
        P = np.array([equilibrium_amounts(model, point)[k] for k in model.keys])
        return float(np.dot(weights, P)) - value

    lo, hi = -30.0, 30.0
    log_beta = optimize.brentq(gap, lo, hi, xtol=1e-14)
    point = model.point_from_vector(math.exp(log_beta) * weights)
    macro = equilibrium_amounts(model, point)
    return np.array([macro[model.keys[i]] for i in idx])


def _price_weights(model: EntropyModel, prices: Mapping) -> np.ndarray:
    w = np.ones(len(model.keys))
    for q in model.good_indices:
        w[q] = prices[model.keys[q].good]
    return w


def _prices_of(model, vec) -> dict:
    return {model.keys[q].good: float(vec[q]) for q in model.good_indices}


def plan_transition(x, y, *, max_steps: int = 64) -> TransitionPlan:
    """Trader plan taking macro-state ``x`` to ``y`` when ``log Z(y) > log Z(x)``.

    Below the support plane of ``y``: add money up to the plane, then trade at
    the market prices of ``y``.  Above it: first trade quasi-statically along
    geometrically spaced prices toward the prices of the point on x's level
    set straight below ``y`` in money, doubling the number of trades until the
    end point sits under the plane.
    """
    X, Y = _as_system(x), _as_system(y)
    model = X.model
    if Y.model is not model and Y.model.keys != model.keys:
        raise DomainError("planning needs both states on the same model")
    if model.money_key is None:
        raise DomainError("planning needs a simple economy")
    lx, ly = X.log_z, Y.log_z
    if not ly > lx + X.band:
        raise PlanningError(
            f"target is not accessible: log Z(target) = {ly:.12g} <= log Z(start) = {lx:.12g}",
            [{"log_z_start": lx, "log_z_target": ly}],
        )
    mi = model.money_index
    px, py = model.vector(X.macro), model.vector(Y.macro)
    beta_y, nu_y, mu_y = good_values(model, Y.macro)
    normal = np.asarray(log_partition_gradient(model, Y.macro))
    plane_value = float(np.dot(normal, py))
    w_y = normal / beta_y
    plan = TransitionPlan(X, Y)
    trace = []

    def add_money_to_plane(p_from, lz_from):
        amount = (plane_value - float(np.dot(normal, p_from))) / beta_y
        p_new = p_from.copy()
        p_new[mi] += amount
        lz_new = log_partition(model, model.macro(p_new))
        return amount, p_new, lz_new

    goods_equal = np.allclose(np.delete(px, mi), np.delete(py, mi), rtol=1e-12, atol=0)
    if goods_equal and py[mi] > px[mi]:
        plan.steps.append(AddMoney(float(py[mi] - px[mi]), (tuple(normal), plane_value)))
        plan.expected_delta.append(ly - lx)
        return plan

    p_cur, lz_cur = px, lx
    if float(np.dot(normal, px)) > plane_value:
        mu_x = good_values(model, X.macro)[2]
        money = py[mi]

        def level(a):
            return log_partition(model, model.macro(py - a * np.eye(len(py))[mi])) - lx

        a = optimize.brentq(level, 0.0, money * (1 - 1e-12), xtol=1e-14 * money)
        q = py.copy()
        q[mi] -= a
        mu_q = good_values(model, model.macro(q))[2]
        k = 1
        while True:
            path, deltas = [], []
            p, lz = px, lx
            for step in range(1, k + 1):
                mu = mu_x ** (1 - step / k) * mu_q ** (step / k)
                full = np.ones(len(px))
                full[model.good_indices] = mu
                p_new = _landing(model, full, float(np.dot(full, p)))
                lz_new = log_partition(model, model.macro(p_new))
                path.append((dict(zip([model.keys[i].good for i in model.good_indices], mu.tolist())), p_new))
                deltas.append(lz_new - lz)
                p, lz = p_new, lz_new
            below = float(np.dot(normal, p)) < plane_value
            trace.append({"trades": k, "end": p.tolist(), "below_plane": below})
            if below and min(deltas) >= -X.band:
                break
            if k >= max_steps:
                raise PlanningError(f"no plan within {max_steps} quasi-static trades", trace)
            k *= 2
        for (prices, p_new), d in zip(path, deltas):
            plan.steps.append(TradeAtPrice(prices, model.macro(p_new)))
            plan.expected_delta.append(d)
        p_cur, lz_cur = p, lz

    amount, p_new, lz_new = add_money_to_plane(p_cur, lz_cur)
    if amount > 0:
        plan.steps.append(AddMoney(float(amount), (tuple(normal), plane_value)))
        plan.expected_delta.append(lz_new - lz_cur)
        p_cur, lz_cur = p_new, lz_new
    if not np.allclose(p_cur, py, rtol=1e-12, atol=0):
        plan.steps.append(TradeAtPrice(_prices_of(model, w_y), Y.macro))
        plan.expected_delta.append(ly - lz_cur)
    bad = [d for d in plan.expected_delta if d < -X.band]
    if bad:
        raise PlanningError("plan contains a step that lowers log Z", trace + [{"deltas": plan.expected_delta}])
    return plan


@dataclass
class ExecutionResult:
    final_state: MicroState
    economy: Economy
    estimate: MacroState
    steps: list


def _snapshot_totals(economy: Economy, snapshots: np.ndarray) -> np.ndarray:
    """Conserved totals of ``economy`` for every snapshot, shape ``(S, K)``."""
    part = economy.part_index()
    keys = conserved_keys(economy)
    out = np.empty((snapshots.shape[0], len(keys)))
    for q, key in enumerate(keys):
        members = np.isin(part, key.parts)
        out[:, q] = snapshots[:, members, key.good].sum(axis=1)
    return out


def execute_plan(
    economy: Economy,
    state: MicroState,
    plan: TransitionPlan,
    rng=None,
    *,
    step_events: int | None = None,
    final_samples: int = 400,
) -> ExecutionResult:
    """Simulate ``plan`` from ``state``; the estimate is the last session's snapshot mean.

    Money is added to one randomly chosen agent.  An ``AddMoney`` with a
    support plane recomputes its amount from the current totals so that
    Monte Carlo drift in earlier sessions is corrected.
    """
    rng = np.random.default_rng(rng)
    N = economy.n_agents
    step_events = step_events or 50 * N
    model = EntropyModel.from_economy(economy)
    mi = model.money_index
    records = []
    estimate = macro_state_of(economy, state)
    n_trades = sum(isinstance(a, TradeAtPrice) for a in plan.steps)
    seen_trades = 0
    for idx, action in enumerate(plan.steps):
        current = model.vector(macro_state_of(economy, state))
        if isinstance(action, AddMoney):
            amount = action.amount
            if action.plane is not None:
                normal, value = np.asarray(action.plane[0]), action.plane[1]
                amount = max(0.0, (value - float(np.dot(normal, current))) / normal[mi])
            p = state.possessions.copy()
            p[int(rng.integers(N)), MONEY] += amount
            state = MicroState(p)
            estimate = macro_state_of(economy, state)
            records.append({"step": idx, "action": "add_money", "amount": amount})
        elif isinstance(action, TradeAtPrice):
            seen_trades += 1
            last = seen_trades == n_trades and idx == len(plan.steps) - 1
            horizon = step_events + (final_samples * N if last else 0)
            traj = trading_contact_session(
                economy, state, dict(action.prices), horizon, rng,
                burn_in=step_events, thin=N, record_events=False, keep_snapshots=False,
            )
            state = traj.final
            if last and traj.n_samples:
                estimate = model.macro(traj.totals.mean(axis=0))
            else:
                estimate = macro_state_of(economy, state)
            records.append({"step": idx, "action": "trade_at_price", "totals": model.vector(estimate).tolist()})
        elif isinstance(action, (MakeContact, BreakContact)):
            economy = set_contact(economy, action.part_a, action.part_b, action.goods,
                                  isinstance(action, MakeContact))
            model = EntropyModel.from_economy(economy)
            estimate = macro_state_of(economy, state)
            records.append({"step": idx, "action": action_to_dict(action)["action"]})
        else:
            raise TypeError(f"unknown action {action!r}")
    return ExecutionResult(state, economy, estimate, records)


# --------------------------------------------------------------------------
# financial equilibrium
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumVerdict:
    equilibrium: bool
    beta_first: float
    beta_second: float
    flow: str  # "none", "first->second" or "second->first"


def financial_equilibrium(a, b, *, rtol: float = BETA_RTOL) -> EquilibriumVerdict:
    """Compare coolness; money is predicted to flow toward the cooler (higher-beta) system."""
    A, B = _as_system(a), _as_system(b)
    if A.model.money_key is None or B.model.money_key is None:
        raise DomainError("financial equilibrium needs simple economies")
    ba, bb = coolness(A.model, A.macro), coolness(B.model, B.macro)
    if abs(ba - bb) <= rtol * max(ba, bb):
        return EquilibriumVerdict(True, ba, bb, "none")
    return EquilibriumVerdict(False, ba, bb, "first->second" if bb > ba else "second->first")


def join_economies(first: Economy, second: Economy, goods=(MONEY,), rate: float | None = None) -> Economy:
    """Two single-part economies side by side, exchanging ``goods`` across the boundary.

    Encounters are all-to-all over the union at ``rate`` (default ``1/(N-1)``).
    """
    if first.goods != second.goods:
        raise DomainError("joined economies must share their goods")
    na, nb = first.n_agents, second.n_agents
    n = na + nb
    utils = [ag.utility for ag in first.agents] + [ag.utility for ag in second.agents]
    return make_economy(
        utils,
        goods=first.goods,
        parts=[list(range(na)), list(range(na, n))],
        tradable={(0, 1): frozenset(goods)},
        rate=rate if rate is not None else 1.0 / (n - 1),
        trader_rate=np.concatenate([first.trader_rates, second.trader_rates]),
    )


@dataclass
class FlowResult:
    initial_money: float
    money_series: np.ndarray
    mean_money: float
    stderr: float
    early_flow: float


def simulate_joined_flow(
    first: Economy, state_first: MicroState, second: Economy, state_second: MicroState,
    horizon: int, rng=None, *, early_events: int | None = None, burn_in: int | None = None,
) -> FlowResult:
    """Join two economies by money contact and track the first system's money."""
    joined = join_economies(first, second)
    state = MicroState(np.vstack([state_first.possessions, state_second.possessions]))
    na = first.n_agents
    n = joined.n_agents
    early_events = early_events if early_events is not None else 5 * n
    rng = np.random.default_rng(rng)
    m0 = float(math.fsum(state_first.possessions[:, MONEY]))
    early = simulate(joined, state, early_events, rng, burn_in=early_events, thin=n,
                     record_events=False, keep_snapshots=False)
    early_flow = float(math.fsum(early.final.possessions[:na, MONEY])) - m0
    traj = simulate(joined, early.final, horizon, rng, burn_in=burn_in, thin=n, record_events=False)
    series = traj.snapshots[:, :na, MONEY].sum(axis=1)
    return FlowResult(m0, series, float(series.mean()), batch_means_stderr(series), early_flow)


@dataclass(frozen=True)
class MoneyMatch:
    amount: float
    side: str  # "first", "second" or "equilibrium": which system receives the money
    beta: float


def match_money(x, y0, *, rtol: float = 1e-9, max_scale: float = 1e6) -> MoneyMatch:
    """Money ``M`` that brings the two systems into financial equilibrium.

    Money goes to whichever system is hotter (lower beta): side ``second``
    means ``x`` is equivalent to ``y0 + M``.
    """
    X, Y = _as_system(x), _as_system(y0)
    verdict = financial_equilibrium(X, Y)
    if verdict.equilibrium:
        return MoneyMatch(0.0, "equilibrium", verdict.beta_first)
    if verdict.beta_second > verdict.beta_first:
        recv, target, side = Y, verdict.beta_first, "second"
    else:
        recv, target, side = X, verdict.beta_second, "first"
    key = recv.model.money_key
    m0 = recv.macro[key]

    def beta_at(extra):
        return coolness(recv.model, recv.macro.with_total(key, m0 + extra))

    scale = max(m0, 1.0)
    lo, hi = 0.0, scale
    while beta_at(hi) > target:
        lo, hi = hi, 2 * hi
        if hi > max_scale * scale:
            raise AssumptionError(f"no money bracket within {max_scale:g} times the money scale")
    # coolness is monotone in money, so the root is bracketed and unique
    amount = optimize.brentq(lambda e: beta_at(e) / target - 1.0, lo, hi, xtol=1e-15 * hi, rtol=rtol)
    return MoneyMatch(amount, side, beta_at(amount))


# --------------------------------------------------------------------------
# flanking states and calibration
# --------------------------------------------------------------------------


@dataclass
class FlankingStates:
    lower: MacroState
    upper: MacroState
    beta: float
    log_z: tuple
    path: np.ndarray  # rows (goods sold, money, goods)


def flanking_states(x, amount: float, *, eps: float = 1e-3, rtol: float = BETA_RTOL, good: int | None = None):
    """States ``X0 < X < X1`` with equal coolness.

    ``X1 = X + amount``.  ``X0`` starts at ``X - amount`` and sells one good
    slightly below the market price (``(1 - eps) * nu / beta``) until its
    coolness falls to that of ``X1``.  Selling below the market price lowers
    ``log Z`` at every step, so ``X0`` stays below ``X``.
    """
    X = _as_system(x)
    model = X.model
    if model.money_key is None or not model.good_indices:
        raise DomainError("flanking states need money and at least one other good")
    mi = model.money_index
    gi = model.good_indices[0] if good is None else model.keys.index(
        next(k for k in model.keys if k.good == good))
    p = model.vector(X.macro)
    if not 0 < amount < p[mi]:
        raise DomainError("amount must be positive and below the money of the state")
    upper = p.copy()
    upper[mi] += amount
    beta_1 = coolness(model, model.macro(upper))
    start = p.copy()
    start[mi] -= amount

    def at(m, g):
        v = start.copy()
        v[mi], v[gi] = m, g
        return model.macro(v)

    def rhs(s, z):
        m, g = z
        beta, nu, _ = good_values(model, at(m, g))
        return [(1 - eps) * nu[model.good_indices.index(gi)] / beta, -1.0]

    def hit(s, z):
        return coolness(model, at(*z)) - beta_1

    hit.terminal = True
    hit.direction = -1

    def exhausted(s, z):
        return z[1] - 1e-9 * p[gi]

    exhausted.terminal = True

    g0 = start[gi]
    if coolness(model, at(start[mi], g0)) <= beta_1:
        raise ConstructionError("start state is already cooler than the upper reference")
    sol = integrate.solve_ivp(
        rhs, (0.0, g0), [start[mi], g0], events=[hit, exhausted],
        rtol=1e-11, atol=1e-12 * max(p[mi], p[gi]), dense_output=True,
    )
    if not len(sol.t_events[0]):
        raise ConstructionError("selling path left the admissible domain before matching coolness")
    m_end, g_end = sol.y_events[0][0]
    lower = at(m_end, g_end)
    beta_0 = coolness(model, lower)
    if abs(beta_0 - beta_1) > rtol * beta_1:
        raise ConstructionError(f"coolness mismatch {beta_0} vs {beta_1}")
    betas = np.array([coolness(model, at(m, g)) for m, g in sol.y.T])
    if np.any(np.diff(betas) >= 0):
        raise ConstructionError("coolness failed to decrease along the selling path")
    lz = (log_partition(model, lower), X.log_z, log_partition(model, model.macro(upper)))
    if not lz[0] < lz[1] < lz[2]:
        raise ConstructionError(f"flanking order violated: {lz}")
    path = np.column_stack([sol.t, sol.y[0], sol.y[1]])
    return FlankingStates(lower, model.macro(upper), beta_1, lz, path)


def calibrated_entropy(x, lower, upper) -> float:
    """Entropy rescaled so the lower reference is 0 and the upper one is 1.

    Arguments are states or plain ``log Z`` values.
    """

    def lz(s):
        return float(s) if isinstance(s, (int, float, np.floating)) else _as_system(s).log_z

    l0, lx, l1 = lz(lower), lz(x), lz(upper)
    if not l1 > l0:
        raise DomainError("degenerate references: log Z(upper) must exceed log Z(lower)")
    band = LOGZ_BAND * max(1.0, abs(l0), abs(l1))
    if lx < l0 - band or lx > l1 + band:
        raise DomainError("state lies outside the reference interval")
    return (lx - l0) / (l1 - l0)


# --------------------------------------------------------------------------
# monotonicity harness
# --------------------------------------------------------------------------


def _log_z_rows(model: EntropyModel, rows: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(rows)
    if model.family == "cobb_douglas":
        a1 = model.exponent_sums - 1
        const = model.lgamma_sums - np.array([math.lgamma(a) for a in model.exponent_sums])
        with np.errstate(divide="ignore"):
            return np.log(rows) @ a1 + const.sum()
    return np.array([log_partition(model, model.macro(r)) for r in rows])


@dataclass
class StepCheck:
    index: int
    action: str
    delta: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.delta >= -self.tolerance

    def to_dict(self) -> dict:
        return {"step": self.index, "action": self.action, "delta_log_z": self.delta,
                "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class MonotonicityResult:
    seed: int
    steps: list

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)

    @property
    def worst(self) -> StepCheck:
        return min(self.steps, key=lambda s: s.delta + s.tolerance)


def two_part_economy(n_agents: int, rng, exponent_range=(1.5, 3.0)) -> Economy:
    """Cobb-Douglas money/good economy split into two unconnected halves."""
    half = n_agents // 2
    alpha = rng.uniform(*exponent_range, size=(n_agents, 2))
    utils = [CobbDouglas(tuple(a)) for a in alpha]
    return make_economy(utils, parts=[list(range(half)), list(range(half, n_agents))],
                        rate=1.0 / (n_agents - 1))


def run_monotonicity_scenario(
    seed: int,
    *,
    n_agents: int = 50,
    n_steps: int = 4,
    samples: int = 200,
    inject_wrong_sign: bool = False,
) -> MonotonicityResult:
    """Random trader script on a two-part economy; checks ``log Z`` never falls.

    Actions: add money to a part, trade in a part at its market price times
    ``exp(+-U(0.3, 1))``, or open contact between the parts, relax and close
    it again.  Each step compares total ``log Z`` at the pre-step state with
    the post-step estimate (snapshot mean), allowing three batch-means
    standard errors.  ``inject_wrong_sign`` appends a step that sells 60% of
    one part's goods at its market price by editing holdings directly.
    """
    rng = np.random.default_rng(seed)
    economy = two_part_economy(n_agents, rng)
    totals = {k: rng.uniform(0.4, 1.6) * len(economy.structure.parts[k.parts[0]])
              for k in conserved_keys(economy)}
    state = stationary_state(economy, totals, rng)
    N = n_agents
    burn_in = 50 * N
    horizon = burn_in + samples * N
    band = LOGZ_BAND * N
    checks = []
    kinds = list(rng.choice(["add_money", "trade", "contact"], size=n_steps))
    if inject_wrong_sign:
        kinds.append("wrong_sign")
    for idx, kind in enumerate(kinds):
        model = EntropyModel.from_economy(economy)
        pre = model.vector(macro_state_of(economy, state))
        lz_pre = float(_log_z_rows(model, pre)[0])
        part = int(rng.integers(2))
        members = np.asarray(economy.agents_in_parts([part]))
        keys = [k for k in model.keys if part in k.parts]
        q_m = model.keys.index(next(k for k in keys if k.good == MONEY))
        q_g = model.keys.index(next(k for k in keys if k.good == 1))
        grad = log_partition_gradient(model, model.macro(pre))
        mu = grad[q_g] / grad[q_m]
        if kind == "add_money":
            p = state.possessions.copy()
            p[int(rng.choice(members)), MONEY] += rng.uniform(0.1, 0.5) * pre[q_m]
            state = MicroState(p)
            post = model.vector(macro_state_of(economy, state))
            checks.append(StepCheck(idx, kind, float(_log_z_rows(model, post)[0]) - lz_pre, band))
            continue
        if kind == "wrong_sign":
            p = state.possessions.copy()
            sold = 0.6 * p[members, 1]
            p[members, 1] -= sold
            p[members, MONEY] += mu * sold
            state = MicroState(p)
            post = model.vector(macro_state_of(economy, state))
            checks.append(StepCheck(idx, kind, float(_log_z_rows(model, post)[0]) - lz_pre, band))
            continue
        if kind == "trade":
            price = mu * math.exp(rng.choice([-1, 1]) * rng.uniform(0.3, 1.0))
            traj = trading_contact_session(economy, state, {1: price}, horizon, rng, parts=(part,),
                                           burn_in=burn_in, thin=N, record_events=False)
            after = economy
        else:
            goods = [(MONEY,), (1,), (MONEY, 1)][int(rng.integers(3))]
            joined = set_contact(economy, 0, 1, goods, True)
            traj = simulate(joined, state, horizon, rng, burn_in=burn_in, thin=N, record_events=False)
            after = economy
        rows = _snapshot_totals(after, traj.snapshots)
        f = _log_z_rows(model, rows)
        est = float(_log_z_rows(model, rows.mean(axis=0))[0])
        tol = MC_SIGMAS * batch_means_stderr(f, n_batches=20) + band
        checks.append(StepCheck(idx, kind if kind == "trade" else f"contact{list(goods)}", est - lz_pre, tol))
        state = traj.final
    return MonotonicityResult(int(seed), checks)


# --------------------------------------------------------------------------
# axiom suite
# --------------------------------------------------------------------------


DEFAULT_SUITE = {
    "seed": 12345,
    "n_agents": 50,
    "exponents": [2.0, 2.0],
    "money_per_agent": 2.0,
    "goods_per_agent": 2.0,
    "scale_factor": 2.0,
    "flank_eps": 1e-3,
    "monotonicity_scenarios": 5,
    "inject_wrong_sign": False,
}


def _check(cid, description, measured, tolerance, passed) -> dict:
    return {
        "id": cid,
        "description": description,
        "measured": measured,
        "tolerance": tolerance,
        "verdict": "pass" if passed else "fail",
    }


def _suite_economy(cfg):
    n = int(cfg["n_agents"])
    utils = [CobbDouglas(tuple(cfg["exponents"]))] * n
    economy = make_economy(utils, rate=1.0 / (n - 1))
    totals = {k: (cfg["money_per_agent"] if k.good == MONEY else cfg["goods_per_agent"]) * n
              for k in conserved_keys(economy)}
    return economy, totals


def _check_scaling(cfg, rng):
    economy, totals = _suite_economy(cfg)
    lam = float(cfg["scale_factor"])
    state = stationary_state(economy, totals, rng)
    big = scale_economy(economy, lam)
    big_state = scale_state(economy, state, lam)
    m1 = EntropyModel.from_economy(economy)
    m2 = EntropyModel.from_economy(big)
    z1 = log_partition(m1, macro_state_of(economy, state)) / economy.n_agents
    z2 = log_partition(m2, macro_state_of(big, big_state)) / big.n_agents
    n = economy.n_agents
    tol = len(m1.keys) * (1 + math.log(lam * n)) / n
    diff = abs(z2 - z1)
    return _check("A4", "per-agent log Z is invariant under replication",
                  {"per_agent_log_z": [z1, z2], "difference": diff}, tol, diff <= tol)


def _check_split_merge(cfg, rng):
    economy, totals = _suite_economy(cfg)
    n = economy.n_agents
    half = n // 2
    joined = make_economy([a.utility for a in economy.agents], parts=[range(half), range(half, n)],
                          tradable={(0, 1): frozenset(range(economy.n_goods))}, rate=1.0 / (n - 1))
    state = stationary_state(joined, {k: totals[(k.good, (0,))] for k in conserved_keys(joined)}, rng)
    traj = simulate(joined, state, 50 * n, rng, record_events=False, keep_snapshots=False)
    state = traj.final
    merged_model = EntropyModel.from_economy(joined)
    lz_merged = log_partition(merged_model, macro_state_of(joined, state))
    split = set_contact(joined, 0, 1, range(economy.n_goods), False)
    split_model = EntropyModel.from_economy(split)
    lz_split = log_partition(split_model, macro_state_of(split, state))
    remerged = set_contact(split, 0, 1, range(economy.n_goods), True)
    lz_again = log_partition(EntropyModel.from_economy(remerged), macro_state_of(remerged, state))
    L = economy.n_goods
    tol = L * (1 + math.log(n)) / n
    per_agent = abs(lz_split - lz_merged) / n
    round_trip = abs(lz_again - lz_merged)
    ok = per_agent <= tol and round_trip <= LOGZ_BAND * n
    return _check("A5", "splitting then merging leaves total log Z unchanged at extensive order",
                  {"per_agent_split_change": per_agent, "round_trip_change": round_trip}, tol, ok)


def _check_merge(cfg):
    seeds = np.random.SeedSequence(cfg["seed"]).spawn(int(cfg["monotonicity_scenarios"]))
    results = []
    for k, ss in enumerate(seeds):
        wrong = bool(cfg["inject_wrong_sign"]) and k == 0
        seed = int(ss.generate_state(1)[0])
        results.append(run_monotonicity_scenario(seed, n_agents=int(cfg["n_agents"]),
                                                 inject_wrong_sign=wrong))
    worst = min((s for r in results for s in r.steps), key=lambda s: s.delta + s.tolerance)
    return _check(
        "A7", "contact and trading never lower total log Z beyond Monte Carlo error",
        {"scenarios": len(results), "steps": sum(len(r.steps) for r in results),
         "worst_step": worst.to_dict()},
        "3 batch-means standard errors", all(r.passed for r in results),
    )


def _check_add_money(cfg):
    economy, totals = _suite_economy(cfg)
    model = EntropyModel.from_economy(economy)
    macro = MacroState(dict(totals), economy.n_agents)
    key = model.money_key
    m = macro[key]
    deltas = []
    for frac in (1e-6, 1e-3, 0.1, 1.0, 10.0):
        deltas.append(log_partition(model, macro.with_total(key, m * (1 + frac))) - log_partition(model, macro))
    verdicts = [accessible((model, macro), (model, macro.with_total(key, m * (1 + f)))) for f in (0.1, 1.0)]
    ok = min(deltas) > 0 and all(v == "forward" for v in verdicts)
    return _check("A8", "adding money strictly increases log Z",
                  {"min_delta_log_z": min(deltas), "verdicts": verdicts}, 0.0, ok)


def _check_equilibrium(cfg):
    economy, totals = _suite_economy(cfg)
    model = EntropyModel.from_economy(economy)
    small = EntropyModel.cobb_douglas([list(cfg["exponents"])] * (int(cfg["n_agents"]) // 2))
    x = SystemState(model, MacroState(dict(totals), economy.n_agents))
    y0 = SystemState(small, small.macro(*[t / 4 for t in model.vector(x.macro)]))
    match = match_money(x, y0)
    y = y0 if match.side != "second" else SystemState(
        small, y0.macro.with_total(small.money_key, y0.macro[small.money_key] + match.amount))
    xm = x if match.side != "first" else SystemState(
        model, x.macro.with_total(model.money_key, x.macro[model.money_key] + match.amount))
    v1 = financial_equilibrium(xm, y)
    c = SystemState(model, xm.macro.scaled(1.0))
    v2 = financial_equilibrium(y, c)
    v3 = financial_equilibrium(xm, c)
    ok = v1.equilibrium and (v3.equilibrium or not (v1.equilibrium and v2.equilibrium))
    return _check("A13/A15", "money matching reaches financial equilibrium; equilibrium is transitive",
                  {"amount": match.amount, "side": match.side,
                   "betas": [v1.beta_first, v1.beta_second], "transitive": v3.equilibrium},
                  BETA_RTOL, ok)


def _check_flanking(cfg):
    economy, totals = _suite_economy(cfg)
    model = EntropyModel.from_economy(economy)
    macro = MacroState(dict(totals), economy.n_agents)
    amount = 0.2 * macro[model.money_key]
    try:
        fl = flanking_states((model, macro), amount, eps=float(cfg["flank_eps"]))
    except (ConstructionError, DomainError) as exc:
        return _check("A14", "flanking states with equal coolness exist", {"error": str(exc)}, BETA_RTOL, False)
    b0 = coolness(model, fl.lower)
    rel = abs(b0 - fl.beta) / fl.beta
    return _check("A14", "flanking states with equal coolness exist",
                  {"beta_mismatch": rel, "log_z": list(fl.log_z)}, BETA_RTOL, rel <= BETA_RTOL)


def _check_concavity(cfg, rng):
    economy, totals = _suite_economy(cfg)
    model = EntropyModel.from_economy(economy)
    n = economy.n_agents
    worst = math.inf
    for _ in range(50):
        p0 = rng.uniform(0.2, 5.0, len(model.keys)) * n
        p1 = rng.uniform(0.2, 5.0, len(model.keys)) * n
        lam = rng.uniform()
        mid = log_partition(model, model.macro(lam * p0 + (1 - lam) * p1))
        chord = lam * log_partition(model, model.macro(p0)) + (1 - lam) * log_partition(model, model.macro(p1))
        worst = min(worst, mid - chord)
    tol = len(model.keys) * math.log(n)
    return _check("A9/A10", "log Z is concave up to O(log N)", {"min_gap": worst}, tol, worst >= -tol)


def run_axiom_suite(config: Mapping | None = None) -> dict:
    """Run every axiom check; failures are report entries, never exceptions."""
    cfg = dict(DEFAULT_SUITE)
    cfg.update(config or {})
    rng = np.random.default_rng(cfg["seed"])
    checks = []
    for fn in (
        lambda: _check_scaling(cfg, rng),
        lambda: _check_split_merge(cfg, rng),
        lambda: _check_merge(cfg),
        lambda: _check_add_money(cfg),
        lambda: _check_equilibrium(cfg),
        lambda: _check_flanking(cfg),
        lambda: _check_concavity(cfg, rng),
    ):
        try:
            checks.append(fn())
        except Exception as exc:  # a crashing check is a failed check
            checks.append(_check("error", type(exc).__name__, {"error": str(exc)}, None, False))
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {
        "schema": REPORT_SCHEMA,
        "seed": int(cfg["seed"]),
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "config": cfg,
        "checks": checks,
        "passed": all(c["verdict"] == "pass" for c in checks),
    }


def summary_table(report: Mapping) -> str:
    """Plain-text table of check verdicts."""
    rows = [("check", "verdict", "description")]
    rows += [(c["id"], c["verdict"], c["description"]) for c in report["checks"]]
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    lines = [f"{a:<{w0}}  {b:<{w1}}  {c}" for a, b, c in rows]
    lines.insert(1, "-" * len(lines[0]))
    lines.append(f"overall: {'pass' if report['passed'] else 'fail'}")
    return "\n".join(lines)
