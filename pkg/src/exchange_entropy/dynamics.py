"""Continuous-time encounter dynamics and trader sessions.

The event loop is a direct-method Gillespie simulation over a fixed table of
channels: one per agent pair that can exchange something, plus one per agent
the trader is in contact with during a session.  Random numbers are drawn in
fixed-size batches so a trajectory is a pure function of its inputs and seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, NamedTuple

import numpy as np

from .diagnostics import autocorrelation_time, batch_means_stderr, effective_sample_size
from .economy import MONEY, CobbDouglas, Economy, MicroState, conserved_keys
from .sampling import (
    DEFAULT_SWEEPS,
    sample_budget_line,
    sample_pot_exchange,
    sample_redistribution,
    split_exact,
)

BATCH_SIZE = 4096


class EventKind(IntEnum):
    AGENT_PAIR = 0
    TRADER_FINANCIAL = 1
    TRADER_TRADING = 2


class EncounterEvent(NamedTuple):
    time: float
    kind: EventKind
    i: int
    j: int  # -1 for trader events
    goods: tuple


@dataclass(frozen=True)
class Financial:
    """Trader holds a pot of money open to the distinguished money component."""

    pot: float

    def __post_init__(self):
        if not (self.pot >= 0 and math.isfinite(self.pot)):
            raise ValueError(f"pot must be non-negative, got {self.pot}")


@dataclass(frozen=True)
class Trading:
    """Trader posts prices for some non-money goods to the agents of ``parts``."""

    prices: Mapping
    parts: tuple | None = None

    def __post_init__(self):
        prices = {int(g): float(v) for g, v in dict(self.prices).items()}
        if not prices or MONEY in prices:
            raise ValueError("trading needs prices for one or more non-money goods")
        if any(not (v > 0 and math.isfinite(v)) for v in prices.values()):
            raise ValueError(f"prices must be positive, got {prices}")
        object.__setattr__(self, "prices", prices)
        if self.parts is not None:
            object.__setattr__(self, "parts", tuple(int(p) for p in self.parts))


@dataclass(frozen=True)
class TraderSessionConfig:
    mode: Financial | Trading
    horizon: int


@dataclass(frozen=True, eq=False)
class ChannelTable:
    kind: np.ndarray
    i: np.ndarray
    j: np.ndarray
    rate: np.ndarray
    goods: list
    exact: np.ndarray  # Cobb-Douglas fast path available
    beta_a: np.ndarray
    beta_b: np.ndarray

    def __len__(self):
        return len(self.rate)


def _build_channels(economy: Economy, session) -> ChannelTable:
    N, L = economy.n_agents, economy.n_goods
    utils = [a.utility for a in economy.agents]
    is_cd = np.array([isinstance(u, CobbDouglas) for u in utils])
    alpha = np.ones((N, L))
    for n, u in enumerate(utils):
        if is_cd[n]:
            alpha[n] = u.exponents
    part = economy.part_index()
    kind, ci, cj, rate, goods, exact, ba, bb = [], [], [], [], [], [], [], []

    iu, ju = np.triu_indices(N, 1)
    k = economy.encounter_rates[iu, ju]
    keep = k > 0
    for i, j, r in zip(iu[keep], ju[keep], k[keep]):
        gs = tuple(sorted(economy.structure.goods_between(part[i], part[j], L)))
        if not gs:
            continue
        kind.append(EventKind.AGENT_PAIR)
        ci.append(i)
        cj.append(j)
        rate.append(r)
        goods.append(gs)
        exact.append(is_cd[i] and is_cd[j])
        ba.append(alpha[i])
        bb.append(alpha[j])

    if isinstance(session, Financial):
        eligible = economy.agents_in_parts(economy.money_component())
        for i in eligible:
            if economy.trader_rates[i] > 0:
                kind.append(EventKind.TRADER_FINANCIAL)
                ci.append(i)
                cj.append(-1)
                rate.append(economy.trader_rates[i])
                goods.append((MONEY,))
                exact.append(is_cd[i])
                a = np.ones(L)
                a[MONEY] = alpha[i, MONEY]
                ba.append(a)
                bb.append(np.ones(L))
    elif isinstance(session, Trading):
        if max(session.prices) >= L:
            raise ValueError("priced good out of range")
        parts = session.parts if session.parts is not None else range(economy.structure.n_parts)
        priced = tuple(sorted(session.prices))
        for i in economy.agents_in_parts(parts):
            if economy.trader_rates[i] > 0:
                kind.append(EventKind.TRADER_TRADING)
                ci.append(i)
                cj.append(-1)
                rate.append(economy.trader_rates[i])
                goods.append((MONEY,) + priced)
                exact.append(is_cd[i])
                a, b = np.ones(L), np.ones(L)
                if len(priced) == 1:
                    t = priced[0]
                    a[t] = alpha[i, t]
                    b[t] = alpha[i, MONEY]
                ba.append(a)
                bb.append(b)
    elif session is not None:
        raise TypeError(f"unknown session {session!r}")

    empty = np.zeros((0, L))
    return ChannelTable(
        kind=np.array(kind, dtype=np.int8),
        i=np.array(ci, dtype=np.int64),
        j=np.array(cj, dtype=np.int64),
        rate=np.array(rate, dtype=float),
        goods=goods,
        exact=np.array(exact, dtype=bool),
        beta_a=np.array(ba) if ba else empty,
        beta_b=np.array(bb) if bb else empty,
    )


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return None, rng
    return rng, np.random.default_rng(rng)


@dataclass(eq=False)
class Trajectory:
    """Outcome of one simulation run.

    Events are stored compactly as (time, channel) arrays and expanded on
    demand through :attr:`events`.  ``totals`` holds the conserved-quantity
    totals at every thinned sample, in the order of ``keys``.
    """

    economy: Economy
    seed: object
    session: object
    initial: MicroState
    final: MicroState
    n_events: int
    time: float
    channels: ChannelTable
    event_times: np.ndarray
    event_channels: np.ndarray
    keys: list
    sample_events: np.ndarray
    sample_times: np.ndarray
    totals: np.ndarray
    snapshots: np.ndarray | None
    pot_series: np.ndarray | None
    final_pot: float | None
    burn_in: int = 0
    thin: int = 1
    prices: Mapping = field(default_factory=dict)

    @property
    def events(self) -> list:
        ch = self.channels
        out = []
        for t, c in zip(self.event_times, self.event_channels):
            out.append(
                EncounterEvent(float(t), EventKind(int(ch.kind[c])), int(ch.i[c]), int(ch.j[c]), ch.goods[c])
            )
        return out

    @property
    def n_samples(self) -> int:
        return len(self.sample_events)

    def total_series(self, key) -> np.ndarray:
        return self.totals[:, self.keys.index(tuple(key))]

    def money_shares(self) -> np.ndarray:
        """Per-sample money share of each agent within its money component."""
        if self.snapshots is None:
            raise ValueError("trajectory was run without snapshots")
        m = self.snapshots[:, :, MONEY]
        part = self.economy.part_index()
        out = np.empty_like(m)
        for key_idx, key in enumerate(self.keys):
            if key.good != MONEY:
                continue
            members = np.isin(part, key.parts)
            tot = self.totals[:, key_idx][:, None]
            out[:, members] = m[:, members] / np.where(tot > 0, tot, 1.0)
        return out

    def summary(self) -> dict:
        """Final-moment summary suitable for a JSON report."""
        doc = {
            "seed": self.seed if isinstance(self.seed, (int, type(None))) else str(self.seed),
            "n_events": self.n_events,
            "time": self.time,
            "n_samples": self.n_samples,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "final_totals": {
                k.label(): float(v)
                for k, v in zip(self.keys, self.final_totals())
            },
        }
        if self.n_samples >= 2:
            doc["totals"] = {}
            for idx, k in enumerate(self.keys):
                x = self.totals[:, idx]
                doc["totals"][k.label()] = {
                    "mean": float(x.mean()),
                    "sd": float(x.std(ddof=1)),
                    "stderr": batch_means_stderr(x, min(50, len(x) // 2 or 2)) if len(x) >= 4 else None,
                    "ess": effective_sample_size(x),
                }
            if self.snapshots is not None:
                m = self.snapshots[:, :, MONEY]
                doc["agent_money"] = {
                    "mean": m.mean(axis=0).tolist(),
                    "second_moment": (m**2).mean(axis=0).tolist(),
                }
        if self.pot_series is not None:
            doc["final_pot"] = self.final_pot
            if len(self.pot_series) >= 2:
                doc["pot"] = {
                    "mean": float(self.pot_series.mean()),
                    "ess": effective_sample_size(self.pot_series),
                    "tau": autocorrelation_time(self.pot_series),
                }
        return doc

    def final_totals(self) -> np.ndarray:
        part = self.economy.part_index()
        p = self.final.possessions
        return np.array([math.fsum(p[np.isin(part, k.parts), k.good]) for k in self.keys])

    def to_csv(self, fh=None) -> str | None:
        """Write the sampled time series; returns the text when ``fh`` is None."""
        sink = io.StringIO() if fh is None else fh
        w = csv.writer(sink, lineterminator="\n")
        header = ["sample", "event", "time"] + [k.label() for k in self.keys]
        if self.pot_series is not None:
            header.append("pot")
        w.writerow(header)
        for s in range(self.n_samples):
            row = [s, int(self.sample_events[s]), repr(float(self.sample_times[s]))]
            row += [repr(float(v)) for v in self.totals[s]]
            if self.pot_series is not None:
                row.append(repr(float(self.pot_series[s])))
            w.writerow(row)
        return sink.getvalue() if fh is None else None

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def simulate(
    economy: Economy,
    state: MicroState,
    horizon: int,
    rng=None,
    *,
    session=None,
    burn_in: int | None = None,
    thin: int | None = None,
    record_events: bool = True,
    keep_snapshots: bool = True,
    sweeps: int = DEFAULT_SWEEPS,
    until_time: float | None = None,
) -> Trajectory:
    """Run ``horizon`` encounter events from ``state``.

    Samples are taken every ``thin`` events (default ``N``) once ``burn_in``
    events (default ``50 N``) have elapsed.  ``session`` adds trader channels
    (:class:`Financial` or :class:`Trading`).  ``rng`` may be a seed or a
    ``numpy.random.Generator``.  A frozen economy (total rate zero) returns
    immediately with no events.
    """
    state.check(economy)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    horizon = int(horizon)
    if isinstance(session, Financial) and not economy.is_simple:
        raise ValueError("financial contact needs a simple economy")
    seed, gen = _as_rng(rng)
    N, L = economy.n_agents, economy.n_goods
    burn_in = 50 * N if burn_in is None else int(burn_in)
    thin = N if thin is None else int(thin)
    if thin < 1 or burn_in < 0:
        raise ValueError("thin must be >= 1 and burn_in >= 0")

    ch = _build_channels(economy, session)
    keys = conserved_keys(economy)
    part = economy.part_index()
    members = [np.isin(part, k.parts) for k in keys]
    key_goods = [k.good for k in keys]
    utils = [a.utility for a in economy.agents]

    P = state.possessions.tolist()
    pot = float(session.pot) if isinstance(session, Financial) else None
    prices = dict(session.prices) if isinstance(session, Trading) else {}
    single_price = None
    if len(prices) == 1:
        single_price = next(iter(prices.items()))

    n_max_samples = max(0, (horizon - burn_in) // thin)
    sample_events = np.zeros(n_max_samples, dtype=np.int64)
    sample_times = np.zeros(n_max_samples)
    totals = np.zeros((n_max_samples, len(keys)))
    snapshots = np.zeros((n_max_samples, N, L)) if keep_snapshots else None
    pot_series = np.zeros(n_max_samples) if pot is not None else None
    times_out, chans_out = [], []

    t = 0.0
    done = 0
    n_s = 0
    total_rate = float(ch.rate.sum()) if len(ch) else 0.0
    if total_rate > 0:
        cum = np.cumsum(ch.rate)
        kinds = ch.kind.tolist()
        ci = ch.i.tolist()
        cj = ch.j.tolist()
        cgoods = ch.goods
        cexact = ch.exact.tolist()
        last = len(ch) - 1
        stop = False
        while done < horizon and not stop:
            B = min(BATCH_SIZE, horizon - done)
            dts = gen.exponential(1.0 / total_rate, B)
            picks = np.searchsorted(cum, gen.random(B) * total_rate, side="right")
            np.minimum(picks, last, out=picks)
            fracs = gen.beta(ch.beta_a[picks], ch.beta_b[picks]).tolist()
            ev_times = t + np.cumsum(dts)
            n_used = B
            if until_time is not None and ev_times[-1] > until_time:
                n_used = int(np.searchsorted(ev_times, until_time, side="right"))
                stop = True
            picks_l = picks.tolist()
            for e in range(n_used):
                c = picks_l[e]
                kind = kinds[c]
                i = ci[c]
                if kind == 0:
                    j = cj[c]
                    if cexact[c]:
                        pi, pj, fr = P[i], P[j], fracs[e]
                        for g in cgoods[c]:
                            pool = pi[g] + pj[g]
                            x = pool * fr[g]
                            if x + x <= pool:
                                b = pool - x
                                pi[g], pj[g] = pool - b, b
                            else:
                                pi[g], pj[g] = x, pool - x
                    else:
                        a, b = sample_redistribution(utils[i], utils[j], P[i], P[j], cgoods[c], gen, sweeps)
                        P[i], P[j] = a.tolist(), b.tolist()
                elif kind == 1:
                    pi = P[i]
                    if cexact[c]:
                        pool = pi[0] + pot
                        x = pool * fracs[e][0]
                        pi[0], pot = split_exact(pool, x)
                    else:
                        h, pot = sample_pot_exchange(utils[i], pi, pot, gen, sweeps)
                        P[i] = h.tolist()
                else:
                    pi = P[i]
                    if cexact[c] and single_price is not None:
                        g, mu = single_price
                        wealth = pi[0] + mu * pi[g]
                        v = wealth * fracs[e][g]
                        gnew = v / mu
                        m = wealth - mu * gnew
                        pi[0] = m if m > 0.0 else 0.0
                        pi[g] = gnew
                    else:
                        wealth = pi[0] + sum(mu * pi[g] for g, mu in prices.items())
                        h = sample_budget_line(utils[i], wealth, prices, gen, holdings=pi, sweeps=sweeps)
                        P[i] = h.tolist()
                n = done + e + 1
                if n > burn_in and (n - burn_in) % thin == 0:
                    snap = np.array(P)
                    sample_events[n_s] = n
                    sample_times[n_s] = ev_times[e]
                    for q, mask in enumerate(members):
                        totals[n_s, q] = snap[mask, key_goods[q]].sum()
                    if snapshots is not None:
                        snapshots[n_s] = snap
                    if pot_series is not None:
                        pot_series[n_s] = pot
                    n_s += 1
            if record_events:
                times_out.append(ev_times[:n_used])
                chans_out.append(picks[:n_used].astype(np.int32))
            if n_used:
                t = float(ev_times[n_used - 1])
            done += n_used

    return Trajectory(
        economy=economy,
        seed=seed,
        session=session,
        initial=state,
        final=MicroState(np.array(P, dtype=float).reshape(N, L)),
        n_events=done,
        time=t,
        channels=ch,
        event_times=np.concatenate(times_out) if times_out else np.zeros(0),
        event_channels=np.concatenate(chans_out) if chans_out else np.zeros(0, dtype=np.int32),
        keys=keys,
        sample_events=sample_events[:n_s],
        sample_times=sample_times[:n_s],
        totals=totals[:n_s],
        snapshots=snapshots[:n_s] if snapshots is not None else None,
        pot_series=pot_series[:n_s] if pot_series is not None else None,
        final_pot=pot,
        burn_in=burn_in,
        thin=thin,
        prices=prices,
    )


def financial_contact_session(economy, state, pot, horizon, rng=None, **kwargs):
    """Hold a pot of money open to the economy, then break contact.

    Returns ``(trajectory, remaining_pot)``; the trajectory's final state is
    the economy after the contact is broken.
    """
    if not (pot >= 0):
        raise ValueError(f"pot must be non-negative, got {pot}")
    traj = simulate(economy, state, horizon, rng, session=Financial(float(pot)), **kwargs)
    return traj, traj.final_pot


def trading_contact_session(economy, state, price, horizon, rng=None, *, parts=None, **kwargs):
    """Post prices to the agents (of ``parts``) and let them trade on their budget lines.

    ``price`` is a single price for good 1 or a ``{good: price}`` mapping.
    """
    prices = dict(price) if isinstance(price, Mapping) else {1: price}
    return simulate(economy, state, horizon, rng, session=Trading(prices, parts), **kwargs)


def stationary_state(economy: Economy, totals: Mapping, rng=None) -> MicroState:
    """Exact draw from the stationary law of a Cobb-Douglas economy.

    ``totals`` maps conserved-quantity keys to totals; each quantity is
    split over its agents with a Dirichlet draw on their exponents.
    """
    _, gen = _as_rng(rng)
    N, L = economy.n_agents, economy.n_goods
    if not all(isinstance(a.utility, CobbDouglas) for a in economy.agents):
        raise ValueError("stationary draws are only available for Cobb-Douglas economies")
    alpha = np.array([a.utility.exponents for a in economy.agents])
    part = economy.part_index()
    p = np.zeros((N, L))
    for key in conserved_keys(economy):
        total = float(totals[key])
        idx = np.flatnonzero(np.isin(part, key.parts))
        shares = gen.dirichlet(alpha[idx, key.good]) if len(idx) > 1 else np.ones(1)
        p[idx, key.good] = total * shares
    return MicroState(p)


def equal_split_state(economy: Economy, totals: Mapping) -> MicroState:
    """Deterministic state: every conserved total split evenly over its agents."""
    N, L = economy.n_agents, economy.n_goods
    part = economy.part_index()
    p = np.zeros((N, L))
    for key in conserved_keys(economy):
        idx = np.flatnonzero(np.isin(part, key.parts))
        p[idx, key.good] = float(totals[key]) / len(idx)
    return MicroState(p)
