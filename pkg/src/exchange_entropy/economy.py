"""Economies, utility families, contact structure and conserved quantities.

An economy is a population of agents holding non-negative amounts of ``L``
goods (good 0 is money by convention).  Agents are grouped into parts; within
a part every good can change hands, across a pair of parts only the goods
listed in the tradable map can.  The connected components of each good's flow
graph over parts define the conserved quantities, and the totals of those
quantities form the macro-state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

MONEY = 0
SCHEMA_VERSION = "exchange-economy/1"


# --------------------------------------------------------------------------
# utility families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CobbDouglas:
    """Utility proportional to ``prod_t p_t**(a_t - 1)``."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(float(a) for a in np.atleast_1d(self.exponents))
        if not exps:
            raise ValueError("CobbDouglas needs at least one exponent")
        if not all(a > 0 and math.isfinite(a) for a in exps):
            raise ValueError(f"CobbDouglas exponents must be positive, got {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def n_goods(self):
        return len(self.exponents)


def _check_pair(alpha, goods, name):
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"{name} alpha must be positive, got {alpha}")
    if len(goods) != 2 or goods[0] == goods[1] or min(goods) < 0:
        raise ValueError(f"{name} needs two distinct good indices, got {goods}")


@dataclass(frozen=True)
class PerfectSubstitutes:
    """Utility ``(p[a] + p[b])**(alpha - 1)``; flat in every other good."""

    alpha: float
    goods: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "goods", tuple(int(g) for g in self.goods))
        _check_pair(self.alpha, self.goods, "PerfectSubstitutes")


@dataclass(frozen=True)
class Complements:
    """Utility ``min(p[a], p[b])**(alpha - 1)``; flat in every other good."""

    alpha: float
    goods: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "goods", tuple(int(g) for g in self.goods))
        _check_pair(self.alpha, self.goods, "Complements")


UtilitySpec = Union[CobbDouglas, PerfectSubstitutes, Complements]


def _log_power(base, exponent):
    # log(base**exponent) with the 0**0 = 1 convention
    if exponent == 0.0:
        return 0.0
    if base <= 0.0:
        return -math.inf if exponent > 0 else math.inf
    return exponent * math.log(base)


def log_utility(spec: UtilitySpec, p) -> float:
    """Return ``log u(p)``; ``-inf`` where the utility vanishes.

    For Cobb-Douglas exponents below one the utility diverges at zero
    holdings and ``+inf`` is returned there.  Samplers never evaluate at
    exactly zero, so this only shows up in direct calls.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("possessions must be a 1-D good vector")
    if isinstance(spec, CobbDouglas):
        if len(p) != spec.n_goods:
            raise ValueError(f"expected {spec.n_goods} goods, got {len(p)}")
        total = 0.0
        for a, x in zip(spec.exponents, p):
            total += _log_power(float(x), a - 1.0)
        return total
    a, b = spec.goods
    if max(a, b) >= len(p):
        raise ValueError(f"good index {max(a, b)} out of range for {len(p)} goods")
    if isinstance(spec, PerfectSubstitutes):
        return _log_power(float(p[a] + p[b]), spec.alpha - 1.0)
    if isinstance(spec, Complements):
        return _log_power(float(min(p[a], p[b])), spec.alpha - 1.0)
    raise TypeError(f"unknown utility spec {spec!r}")


def utility_to_dict(spec: UtilitySpec) -> dict:
    if isinstance(spec, CobbDouglas):
        return {"family": "cobb_douglas", "exponents": list(spec.exponents)}
    if isinstance(spec, PerfectSubstitutes):
        return {"family": "substitutes", "alpha": spec.alpha, "goods": list(spec.goods)}
    if isinstance(spec, Complements):
        return {"family": "complements", "alpha": spec.alpha, "goods": list(spec.goods)}
    raise TypeError(f"unknown utility spec {spec!r}")


def utility_from_dict(d: Mapping) -> UtilitySpec:
    family = d["family"]
    if family == "cobb_douglas":
        return CobbDouglas(tuple(d["exponents"]))
    if family == "substitutes":
        return PerfectSubstitutes(d["alpha"], tuple(d.get("goods", (0, 1))))
    if family == "complements":
        return Complements(d["alpha"], tuple(d.get("goods", (0, 1))))
    raise ValueError(f"unknown utility family {family!r}")


# --------------------------------------------------------------------------
# structure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Agent:
    id: int
    utility: UtilitySpec


def _pair(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class ContactStructure:
    """Partition of agent ids into parts plus the cross-part tradable goods.

    ``tradable`` maps an unordered part pair ``(a, b)`` with ``a < b`` to the
    frozen set of goods that may flow between them.  Within a part every good
    is tradable.
    """

    parts: tuple
    tradable: Mapping = field(default_factory=dict)

    def __post_init__(self):
        parts = tuple(tuple(int(i) for i in p) for p in self.parts)
        if any(len(p) == 0 for p in parts):
            raise ValueError("parts must be non-empty")
        seen = [i for p in parts for i in p]
        if len(seen) != len(set(seen)):
            raise ValueError("an agent appears in more than one part")
        trad = {}
        for key, goods in dict(self.tradable).items():
            a, b = (int(k) for k in key)
            if a == b or not (0 <= a < len(parts) and 0 <= b < len(parts)):
                raise ValueError(f"invalid part pair {key}")
            goods = frozenset(int(g) for g in goods)
            if goods:
                trad[_pair(a, b)] = goods
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "tradable", trad)

    @property
    def n_parts(self):
        return len(self.parts)

    def goods_between(self, a: int, b: int, n_goods: int) -> frozenset:
        if a == b:
            return frozenset(range(n_goods))
        return self.tradable.get(_pair(a, b), frozenset())

    def with_tradable(self, a: int, b: int, goods: frozenset) -> "ContactStructure":
        trad = dict(self.tradable)
        if goods:
            trad[_pair(a, b)] = frozenset(goods)
        else:
            trad.pop(_pair(a, b), None)
        return ContactStructure(self.parts, trad)


class QuantityKey(NamedTuple):
    """Identifies a conserved quantity: one good over a set of parts."""

    good: int
    parts: tuple

    def label(self) -> str:
        return f"g{self.good}@" + "+".join(str(p) for p in self.parts)


@dataclass(frozen=True)
class ConservedQuantity:
    good: int
    component: tuple
    total: float

    @property
    def key(self) -> QuantityKey:
        return QuantityKey(self.good, self.component)


def encounter_matrix(topology: str, n: int, rate: float = 1.0, matrix=None) -> np.ndarray:
    """Symmetric encounter-rate matrix for a named topology."""
    if rate < 0:
        raise ValueError("encounter rate must be non-negative")
    if topology == "all_to_all":
        k = np.full((n, n), float(rate))
    elif topology == "ring":
        k = np.zeros((n, n))
        if n == 2:
            k[0, 1] = k[1, 0] = rate
        elif n > 2:
            idx = np.arange(n)
            k[idx, (idx + 1) % n] = rate
            k[(idx + 1) % n, idx] = rate
    elif topology == "explicit":
        if matrix is None:
            raise ValueError("explicit topology needs a matrix")
        k = np.array(matrix, dtype=float)
        if k.shape != (n, n):
            raise ValueError(f"rate matrix must be {n}x{n}, got {k.shape}")
    else:
        raise ValueError(f"unknown topology {topology!r}")
    np.fill_diagonal(k, 0.0)
    return k


@dataclass(frozen=True, eq=False)
class Economy:
    """Agents, contact structure and encounter rates.

    ``money_part`` distinguishes the money-flow component containing that
    part; an economy with it set is *simple*.  ``topology`` records how the
    rate matrix was built so that scaling and serialization can rebuild it.
    """

    goods: tuple
    agents: tuple
    structure: ContactStructure
    encounter_rates: np.ndarray
    trader_rates: np.ndarray
    money_part: int | None = 0
    topology: Mapping = field(default_factory=lambda: {"name": "explicit"})

    def __post_init__(self):
        goods = tuple(str(g) for g in self.goods)
        agents = tuple(self.agents)
        object.__setattr__(self, "goods", goods)
        object.__setattr__(self, "agents", agents)
        n, L = len(agents), len(goods)
        if n == 0 or L == 0:
            raise ValueError("an economy needs at least one agent and one good")
        ids = [a.id for a in agents]
        if len(set(ids)) != n:
            raise ValueError("agent ids must be unique")
        if sorted(i for p in self.structure.parts for i in p) != sorted(ids):
            raise ValueError("parts must cover every agent exactly once")
        for key, gs in self.structure.tradable.items():
            if any(not 0 <= g < L for g in gs):
                raise ValueError(f"tradable goods {sorted(gs)} invalid for {L} goods")
        for a in agents:
            u = a.utility
            if isinstance(u, CobbDouglas):
                if u.n_goods != L:
                    raise ValueError(f"agent {a.id}: {u.n_goods} exponents for {L} goods")
            elif max(u.goods) >= L:
                raise ValueError(f"agent {a.id}: utility good index out of range")
        k = np.array(self.encounter_rates, dtype=float)
        if k.shape != (n, n):
            raise ValueError(f"encounter_rates must be {n}x{n}")
        if not np.allclose(k, k.T, rtol=0, atol=0) or np.any(np.diag(k) != 0) or np.any(k < 0):
            raise ValueError("encounter rates must be symmetric, non-negative, zero diagonal")
        K = np.broadcast_to(np.asarray(self.trader_rates, dtype=float), (n,)).copy()
        if np.any(K < 0):
            raise ValueError("trader rates must be non-negative")
        k.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "encounter_rates", k)
        object.__setattr__(self, "trader_rates", K)
        if self.money_part is not None and not 0 <= self.money_part < self.structure.n_parts:
            raise ValueError(f"money_part {self.money_part} is not a part")
        object.__setattr__(self, "topology", dict(self.topology))
        self._check_connected()

    # -- derived views --------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_goods(self) -> int:
        return len(self.goods)

    @property
    def is_simple(self) -> bool:
        return self.money_part is not None

    def index_of(self) -> dict:
        return {a.id: i for i, a in enumerate(self.agents)}

    def part_index(self) -> np.ndarray:
        """Part number of each agent, in agent order."""
        idx = self.index_of()
        out = np.empty(self.n_agents, dtype=int)
        for p, members in enumerate(self.structure.parts):
            for aid in members:
                out[idx[aid]] = p
        return out

    def agents_in_parts(self, parts: Iterable[int]) -> np.ndarray:
        parts = set(parts)
        return np.flatnonzero(np.isin(self.part_index(), list(parts)))

    def components(self, good: int) -> list:
        """Connected components (tuples of parts) of one good's flow graph."""
        n = self.structure.n_parts
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (a, b), gs in self.structure.tradable.items():
            if good in gs:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        comps = {}
        for p in range(n):
            comps.setdefault(find(p), []).append(p)
        return sorted(tuple(c) for c in comps.values())

    def tradable_matrix(self, good: int) -> np.ndarray:
        """Boolean part-by-part matrix: can ``good`` flow between the two parts."""
        n = self.structure.n_parts
        m = np.eye(n, dtype=bool)
        for (a, b), gs in self.structure.tradable.items():
            if good in gs:
                m[a, b] = m[b, a] = True
        return m

    def money_component(self) -> tuple:
        if self.money_part is None:
            raise ValueError("economy is not simple (no distinguished money component)")
        for comp in self.components(MONEY):
            if self.money_part in comp:
                return comp
        raise AssertionError("unreachable")

    def _check_connected(self):
        n = self.n_agents
        if n == 1:
            return
        part = self.part_index()
        iu, ju = np.nonzero(np.triu(self.encounter_rates) > 0)
        for good in range(self.n_goods):
            ok = self.tradable_matrix(good)[part[iu], part[ju]]
            ii, jj = iu[ok], ju[ok]
            graph = csr_matrix((np.ones(len(ii)), (ii, jj)), shape=(n, n))
            _, labels = connected_components(graph, directed=False)
            for comp in self.components(good):
                members = self.agents_in_parts(comp)
                if len(set(labels[members])) > 1:
                    raise ValueError(
                        f"encounter graph for good {good} is disconnected within parts {comp}"
                    )


def make_economy(
    utilities: Sequence[UtilitySpec],
    *,
    goods: Sequence[str] | None = None,
    parts: Sequence[Sequence[int]] | None = None,
    tradable: Mapping | None = None,
    topology: str = "all_to_all",
    rate: float = 1.0,
    matrix=None,
    trader_rate=1.0,
    money_part: int | None = 0,
) -> Economy:
    """Convenience constructor; agent ids are ``0..N-1`` in order."""
    n = len(utilities)
    if goods is None:
        u0 = utilities[0]
        L = u0.n_goods if isinstance(u0, CobbDouglas) else max(u0.goods) + 1
        goods = ["money"] + [f"good{t}" for t in range(1, L)]
    if parts is None:
        parts = [list(range(n))]
    agents = tuple(Agent(i, u) for i, u in enumerate(utilities))
    k = encounter_matrix(topology, n, rate, matrix)
    topo = {"name": topology, "rate": float(rate)}
    if topology == "explicit":
        topo = {"name": "explicit"}
    return Economy(
        goods=tuple(goods),
        agents=agents,
        structure=ContactStructure(tuple(tuple(p) for p in parts), dict(tradable or {})),
        encounter_rates=k,
        trader_rates=trader_rate,
        money_part=money_part,
        topology=topo,
    )


# --------------------------------------------------------------------------
# micro and macro states
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MicroState:
    """Per-agent possessions, shape ``(N, L)``."""

    possessions: np.ndarray

    def __post_init__(self):
        p = np.array(self.possessions, dtype=float)
        if p.ndim != 2:
            raise ValueError("possessions must have shape (N, L)")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("possessions must be finite and non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "possessions", p)

    def check(self, economy: Economy):
        if self.possessions.shape != (economy.n_agents, economy.n_goods):
            raise ValueError(
                f"state shape {self.possessions.shape} does not match "
                f"economy ({economy.n_agents}, {economy.n_goods})"
            )


@dataclass(frozen=True, eq=False)
class MacroState:
    """Totals of the conserved quantities and the agent count."""

    totals: Mapping
    agent_count: int

    def __post_init__(self):
        totals = {QuantityKey(int(k[0]), tuple(k[1])): float(v) for k, v in dict(self.totals).items()}
        if any(not (v >= 0 and math.isfinite(v)) for v in totals.values()):
            raise ValueError("macro totals must be finite and non-negative")
        object.__setattr__(self, "totals", totals)

    def __getitem__(self, key):
        return self.totals[QuantityKey(*key)]

    def keys(self):
        return list(self.totals)

    def with_total(self, key, value) -> "MacroState":
        totals = dict(self.totals)
        key = QuantityKey(*key)
        if key not in totals:
            raise KeyError(key)
        totals[key] = float(value)
        return MacroState(totals, self.agent_count)

    def scaled(self, lam: float) -> "MacroState":
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        return MacroState(
            {k: lam * v for k, v in self.totals.items()},
            max(1, int(round(lam * self.agent_count))),
        )

    def to_dict(self) -> dict:
        return {
            "agent_count": self.agent_count,
            "totals": [
                {"good": k.good, "parts": list(k.parts), "total": v} for k, v in self.totals.items()
            ],
        }


def conserved_keys(economy: Economy) -> list:
    """Keys of the complete independent set of conserved quantities."""
    return [
        QuantityKey(good, comp)
        for good in range(economy.n_goods)
        for comp in economy.components(good)
    ]


def conserved_quantities(economy: Economy, state: MicroState) -> list:
    state.check(economy)
    part = economy.part_index()
    out = []
    for key in conserved_keys(economy):
        members = np.isin(part, key.parts)
        total = math.fsum(state.possessions[members, key.good])
        out.append(ConservedQuantity(key.good, key.parts, total))
    return out


def macro_state_of(economy: Economy, state: MicroState) -> MacroState:
    return MacroState(
        {q.key: q.total for q in conserved_quantities(economy, state)}, economy.n_agents
    )


# --------------------------------------------------------------------------
# trader-level structural operations
# --------------------------------------------------------------------------


def set_contact(economy: Economy, part_a: int, part_b: int, goods, enabled: bool) -> Economy:
    """Open (``enabled``) or close exchange of ``goods`` between two parts.

    Possessions are untouched; only the tradable map changes.
    """
    n_parts = economy.structure.n_parts
    for p in (part_a, part_b):
        if not 0 <= p < n_parts:
            raise KeyError(f"unknown part {p}")
    if part_a == part_b:
        raise ValueError("contact needs two different parts")
    goods = frozenset(int(g) for g in goods)
    if any(not 0 <= g < economy.n_goods for g in goods):
        raise ValueError(f"invalid goods {sorted(goods)}")
    current = economy.structure.goods_between(part_a, part_b, economy.n_goods)
    new = current | goods if enabled else current - goods
    if new == current:
        return economy
    return replace(economy, structure=economy.structure.with_tradable(part_a, part_b, new))


def _origin_indices(economy: Economy, lam: float) -> list:
    """Round-robin replication map, part by part: new agent -> original index."""
    idx = economy.index_of()
    origin = []
    new_parts = []
    for members in economy.structure.parts:
        n_new = int(round(lam * len(members)))
        if n_new < 1:
            raise ValueError(f"scale factor {lam} leaves a part with no agents")
        start = len(origin)
        origin.extend(idx[members[k % len(members)]] for k in range(n_new))
        new_parts.append(tuple(range(start, start + n_new)))
    return origin, new_parts


def scale_economy(economy: Economy, lam: float) -> Economy:
    """Replicate (``lam > 1``) or truncate (``lam < 1``) the population.

    Each part gets ``round(lam * size)`` agents whose utilities cycle through
    the part's original agents.  Named topologies are rebuilt; an explicit
    matrix is tiled through the replication map.
    """
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    if lam == 1:
        return economy
    origin, new_parts = _origin_indices(economy, lam)
    n = len(origin)
    agents = tuple(Agent(i, economy.agents[o].utility) for i, o in enumerate(origin))
    topo = economy.topology
    name = topo.get("name", "explicit")
    if name in ("all_to_all", "ring"):
        k = encounter_matrix(name, n, topo.get("rate", 1.0))
    else:
        k0 = economy.encounter_rates
        o = np.array(origin)
        k = k0[np.ix_(o, o)].copy()
        off = k0[~np.eye(len(k0), dtype=bool)]
        fill = off[off > 0].mean() if np.any(off > 0) else 0.0
        same = o[:, None] == o[None, :]
        k[same] = fill
        np.fill_diagonal(k, 0.0)
    return Economy(
        goods=economy.goods,
        agents=agents,
        structure=ContactStructure(tuple(new_parts), economy.structure.tradable),
        encounter_rates=k,
        trader_rates=economy.trader_rates[origin],
        money_part=economy.money_part,
        topology=topo,
    )


def scale_state(economy: Economy, state: MicroState, lam: float) -> MicroState:
    """Micro-state for ``scale_economy(economy, lam)`` with every total times ``lam``.

    Possessions are replicated along the same round-robin map and then
    rescaled per conserved quantity so the totals are exactly ``lam`` times
    the original ones.
    """
    state.check(economy)
    if lam == 1:
        return state
    origin, _ = _origin_indices(economy, lam)
    scaled = scale_economy(economy, lam)
    p = state.possessions[origin].copy()
    old = {q.key: q.total for q in conserved_quantities(economy, state)}
    part = scaled.part_index()
    for key in conserved_keys(scaled):
        members = np.isin(part, key.parts)
        have = p[members, key.good].sum()
        target = lam * old[key]
        if have > 0:
            p[members, key.good] *= target / have
        elif target > 0:
            p[members, key.good] = target / members.sum()
    return MicroState(p)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def economy_to_dict(economy: Economy) -> dict:
    topo = dict(economy.topology)
    if topo.get("name", "explicit") == "explicit":
        topo = {"name": "explicit", "matrix": economy.encounter_rates.tolist()}
    return {
        "schema": SCHEMA_VERSION,
        "goods": list(economy.goods),
        "agents": [{"id": a.id, "utility": utility_to_dict(a.utility)} for a in economy.agents],
        "parts": [list(p) for p in economy.structure.parts],
        "tradable": [
            {"parts": list(k), "goods": sorted(v)}
            for k, v in sorted(economy.structure.tradable.items())
        ],
        "rates": topo,
        "trader_rates": economy.trader_rates.tolist(),
        "money_part": economy.money_part,
    }


def economy_from_dict(d: Mapping) -> Economy:
    agents = tuple(Agent(int(a["id"]), utility_from_dict(a["utility"])) for a in d["agents"])
    n = len(agents)
    rates = dict(d.get("rates", {"name": "all_to_all", "rate": 1.0}))
    name = rates.get("name", "all_to_all")
    k = encounter_matrix(name, n, rates.get("rate", 1.0), rates.get("matrix"))
    topo = {"name": name, "rate": float(rates.get("rate", 1.0))}
    if name == "explicit":
        topo = {"name": "explicit"}
    parts = d.get("parts") or [[a.id for a in agents]]
    tradable = {tuple(t["parts"]): frozenset(t["goods"]) for t in d.get("tradable", [])}
    return Economy(
        goods=tuple(d["goods"]),
        agents=agents,
        structure=ContactStructure(tuple(tuple(p) for p in parts), tradable),
        encounter_rates=k,
        trader_rates=d.get("trader_rates", 1.0),
        money_part=d.get("money_part", 0),
        topology=topo,
    )


def state_to_dict(state: MicroState) -> dict:
    return {"schema": SCHEMA_VERSION, "possessions": state.possessions.tolist()}


def state_from_dict(d: Mapping) -> MicroState:
    return MicroState(np.array(d["possessions"], dtype=float))


def dumps(economy: Economy, state: MicroState | None = None) -> str:
    doc = {"economy": economy_to_dict(economy)}
    if state is not None:
        doc["state"] = state_to_dict(state)
    return json.dumps(doc, indent=2, sort_keys=True)


def loads(text: str):
    doc = json.loads(text)
    econ = economy_from_dict(doc["economy"])
    state = state_from_dict(doc["state"]) if "state" in doc else None
    return econ, state
