"""Samplers for a single encounter.

Cobb-Douglas agents get exact Beta/Dirichlet draws.  Every other utility
pair falls back to coordinate-wise slice sampling on the bounded box of
exchanged amounts, started from the pre-encounter split so the encounter
kernel leaves the target density invariant.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

from .economy import MONEY, CobbDouglas, UtilitySpec, log_utility
from .exceptions import SamplingError

# fraction of each coordinate's range excluded next to zero by the slice sampler
EDGE_MARGIN = 1e-12
DEFAULT_SWEEPS = 20


def split_exact(pool: float, x: float) -> tuple:
    """Split ``pool`` into ``(a, b)`` with ``a ~ x`` and ``a + b == pool`` in floats.

    The larger share is formed first so that the smaller one is an exact
    (Sterbenz) difference, which makes the pairwise sum bit-exact.
    """
    if x <= 0.0:
        return 0.0, pool
    if x >= pool:
        return pool, 0.0
    if x + x <= pool:
        b = pool - x
        return pool - b, b
    return x, pool - x


def slice_sample_box(
    log_density: Callable[[np.ndarray], float],
    x0,
    lower,
    upper,
    rng: np.random.Generator,
    sweeps: int = DEFAULT_SWEEPS,
):
    """Coordinate-wise slice sampling with shrinkage on a bounded box.

    The initial bracket on each axis is the whole box, so no stepping-out is
    needed.  Returns the final point and its log density.
    """
    x = np.array(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lp = log_density(x)
    if not np.isfinite(lp):
        raise SamplingError(f"slice sampler started at a point with log density {lp}")
    for _ in range(sweeps):
        for d in range(len(x)):
            lo, hi = lower[d], upper[d]
            if hi <= lo:
                continue
            level = lp + math.log(rng.random() or 1e-300)
            cur = x[d]
            while True:
                x[d] = lo + rng.random() * (hi - lo)
                new_lp = log_density(x)
                if new_lp > level:
                    lp = new_lp
                    break
                if x[d] < cur:
                    lo = x[d]
                else:
                    hi = x[d]
                if hi - lo <= 1e-15 * max(1.0, abs(cur)):
                    x[d] = cur
                    break
    return x, lp


def _find_start(log_density, candidates, lower, upper, rng, tries=200):
    for c in candidates:
        c = np.clip(np.asarray(c, dtype=float), lower, upper)
        if np.isfinite(log_density(c)):
            return c
    for _ in range(tries):
        c = lower + rng.random(len(lower)) * (upper - lower)
        if np.isfinite(log_density(c)):
            return c
    raise SamplingError("density is zero (or non-integrable) everywhere tried on the box")


def _box(hi):
    hi = np.asarray(hi, dtype=float)
    margin = EDGE_MARGIN * hi
    return margin, hi - margin


def sample_redistribution(
    u_i: UtilitySpec,
    u_j: UtilitySpec,
    p_i,
    p_j,
    goods,
    rng: np.random.Generator,
    sweeps: int = DEFAULT_SWEEPS,
):
    """Pool two agents' holdings of ``goods`` and redistribute them.

    The new split has density proportional to ``u_i(p_i') * u_j(p_j')`` on
    the set where ``p_i' + p_j'`` equals the pool; other goods are left as
    they were.  Returns the two new good vectors.
    """
    p_i = np.array(p_i, dtype=float)
    p_j = np.array(p_j, dtype=float)
    if p_i.shape != p_j.shape or p_i.ndim != 1:
        raise ValueError("p_i and p_j must be good vectors of equal length")
    if np.any(p_i < 0) or np.any(p_j < 0):
        raise ValueError("possessions must be non-negative")
    goods = sorted(int(g) for g in goods)
    if any(not 0 <= g < len(p_i) for g in goods):
        raise ValueError(f"invalid goods {goods}")
    pool = p_i + p_j
    if isinstance(u_i, CobbDouglas) and isinstance(u_j, CobbDouglas):
        for t in goods:
            frac = rng.beta(u_i.exponents[t], u_j.exponents[t])
            p_i[t], p_j[t] = split_exact(pool[t], pool[t] * frac)
        return p_i, p_j

    free = [t for t in goods if pool[t] > 0]
    for t in goods:
        if pool[t] <= 0:
            p_i[t] = p_j[t] = 0.0
    if not free:
        return p_i, p_j
    lower, upper = _box(pool[free])
    a, b = p_i.copy(), p_j.copy()

    def log_density(x):
        a[free] = x
        b[free] = pool[free] - x
        return log_utility(u_i, a) + log_utility(u_j, b)

    start = _find_start(log_density, [p_i[free], 0.5 * pool[free]], lower, upper, rng)
    x, _ = slice_sample_box(log_density, start, lower, upper, rng, sweeps)
    for t, v in zip(free, x):
        p_i[t], p_j[t] = split_exact(pool[t], v)
    return p_i, p_j


def _prices(price) -> dict:
    if isinstance(price, Mapping):
        prices = {int(g): float(v) for g, v in price.items()}
    else:
        prices = {1: float(price)}
    if not prices or MONEY in prices:
        raise ValueError("prices must be given for non-money goods")
    if any(not (v > 0 and math.isfinite(v)) for v in prices.values()):
        raise ValueError(f"prices must be positive, got {prices}")
    return prices


def sample_budget_line(
    spec: UtilitySpec,
    wealth: float,
    price,
    rng: np.random.Generator,
    *,
    holdings=None,
    n_goods: int | None = None,
    sweeps: int = DEFAULT_SWEEPS,
):
    """Resample an agent's money and priced goods on its budget surface.

    ``price`` is either a single price for good 1 or a ``{good: price}``
    mapping.  The returned vector satisfies ``m + sum(price * g) == wealth``
    up to rounding; goods without a price keep their ``holdings`` values.
    """
    prices = _prices(price)
    if not wealth >= 0:
        raise ValueError(f"wealth must be non-negative, got {wealth}")
    if holdings is not None:
        out = np.array(holdings, dtype=float)
    else:
        if n_goods is None:
            n_goods = spec.n_goods if isinstance(spec, CobbDouglas) else max(
                max(spec.goods), max(prices)) + 1
        out = np.zeros(n_goods)
    goods = sorted(prices)
    if max(goods) >= len(out):
        raise ValueError("priced good out of range")
    mu = np.array([prices[g] for g in goods])
    if wealth == 0:
        out[MONEY] = 0.0
        out[goods] = 0.0
        return out

    if isinstance(spec, CobbDouglas):
        alphas = [spec.exponents[MONEY]] + [spec.exponents[g] for g in goods]
        if len(goods) == 1:
            f = rng.beta(alphas[1], alphas[0])
            values = np.array([wealth * f])
        else:
            values = wealth * rng.dirichlet(alphas)[1:]
    else:
        probe = out.copy()

        def log_density(v):
            if v.sum() > wealth:
                return -math.inf
            probe[goods] = v / mu
            probe[MONEY] = wealth - v.sum()
            return log_utility(spec, probe)

        lower, upper = _box(np.full(len(goods), wealth))
        current = out[goods] * mu if holdings is not None else None
        cands = [current] if current is not None else []
        cands.append(np.full(len(goods), wealth / (len(goods) + 1)))
        start = _find_start(log_density, cands, lower, upper, rng)
        values, _ = slice_sample_box(log_density, start, lower, upper, rng, sweeps)

    g = values / mu
    out[goods] = g
    out[MONEY] = max(0.0, wealth - float(np.dot(mu, g)))
    return out


def sample_pot_exchange(
    spec: UtilitySpec,
    holdings,
    pot: float,
    rng: np.random.Generator,
    sweeps: int = DEFAULT_SWEEPS,
):
    """Pool an agent's money with a flat-utility pot and split it again.

    Returns ``(new_holdings, new_pot)``; the agent's share has density
    proportional to its utility.
    """
    if pot < 0:
        raise ValueError("pot must be non-negative")
    h = np.array(holdings, dtype=float)
    pool = h[MONEY] + pot
    if pool == 0:
        return h, 0.0
    if isinstance(spec, CobbDouglas):
        x = pool * rng.beta(spec.exponents[MONEY], 1.0)
    else:
        probe = h.copy()

        def log_density(v):
            probe[MONEY] = v[0]
            return log_utility(spec, probe)

        lower, upper = _box([pool])
        start = _find_start(log_density, [[h[MONEY]], [0.5 * pool]], lower, upper, rng)
        v, _ = slice_sample_box(log_density, start, lower, upper, rng, sweeps)
        x = v[0]
    h[MONEY], new_pot = split_exact(pool, x)
    return h, new_pot
