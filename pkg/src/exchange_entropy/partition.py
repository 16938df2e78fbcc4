"""Partition functions, coolness, free energy and Legendre entropy recovery.

Cobb-Douglas populations have closed-form partition functions at any size;
each conserved quantity ``q`` with exponent sum ``A_q`` contributes

    (A_q - 1) log P_q + sum_i lgamma(alpha_iq) - lgamma(A_q)

to ``log Z``.  Complements and perfect-substitutes populations only have a
closed-form canonical free energy; their entropy is recovered at extensive
order by inverting the Legendre transform numerically.  Every quantity is
tagged ``exact`` or ``extensive`` accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .diagnostics import effective_sample_size
from .economy import (
    MONEY,
    CobbDouglas,
    Complements,
    Economy,
    MacroState,
    PerfectSubstitutes,
    QuantityKey,
    conserved_keys,
)
from .exceptions import DomainError, LegendreError

EXACT = "exact"
EXTENSIVE = "extensive"

# relative |log(nu/beta)| below which the substitutes divided difference uses its series
SUBSTITUTES_WINDOW = 1e-6
_DERIV_WINDOW = 1e-3


def _single_part_keys(n_goods):
    return tuple(QuantityKey(g, (0,)) for g in range(n_goods))


def _column_fsum(a: np.ndarray) -> np.ndarray:
    # correctly rounded, so constants agree bit for bit however a population is split
    return np.array([math.fsum(col) for col in a.T])


@dataclass(frozen=True, eq=False)
class EntropyModel:
    """Analytic description of a population's partition function.

    ``keys`` lists the conserved quantities in a fixed order; vectors of
    totals or canonical parameters use that order.
    """

    family: str
    keys: tuple
    agent_count: int
    money_key: QuantityKey | None = None
    exponent_sums: np.ndarray | None = None
    lgamma_sums: np.ndarray | None = None
    alpha: float | None = None

    # -- constructors ----------------------------------------------------

    @classmethod
    def cobb_douglas(cls, exponents) -> "EntropyModel":
        """Single-part Cobb-Douglas population; ``exponents`` is ``(N,)`` or ``(N, L)``."""
        a = np.asarray(exponents, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.size == 0 or np.any(a <= 0):
            raise ValueError("exponents must be a non-empty positive (N, L) array")
        keys = _single_part_keys(a.shape[1])
        return cls(
            family="cobb_douglas",
            keys=keys,
            agent_count=a.shape[0],
            money_key=keys[MONEY],
            exponent_sums=_column_fsum(a),
            lgamma_sums=_column_fsum(gammaln(a)),
        )

    @classmethod
    def complements(cls, alpha: float, n_agents: int) -> "EntropyModel":
        if not alpha > 0 or n_agents < 1:
            raise ValueError("alpha must be positive and n_agents >= 1")
        keys = _single_part_keys(2)
        return cls("complements", keys, int(n_agents), keys[MONEY], alpha=float(alpha))

    @classmethod
    def substitutes(cls, alpha: float, n_agents: int) -> "EntropyModel":
        if not alpha > 0 or n_agents < 1:
            raise ValueError("alpha must be positive and n_agents >= 1")
        keys = _single_part_keys(2)
        return cls("substitutes", keys, int(n_agents), keys[MONEY], alpha=float(alpha))

    @classmethod
    def from_economy(cls, economy: Economy) -> "EntropyModel":
        """Model for an economy's current contact structure.

        Cobb-Douglas economies may have any number of parts; the complements
        and substitutes families need a single part, two goods and a common
        exponent.
        """
        utils = [a.utility for a in economy.agents]
        keys = tuple(conserved_keys(economy))
        money_key = None
        if economy.is_simple:
            comp = economy.money_component()
            money_key = QuantityKey(MONEY, comp)
        if all(isinstance(u, CobbDouglas) for u in utils):
            alpha = np.array([u.exponents for u in utils])
            part = economy.part_index()
            A, lg = [], []
            for k in keys:
                col = alpha[np.isin(part, k.parts), k.good]
                A.append(math.fsum(col))
                lg.append(math.fsum(gammaln(col)))
            return cls("cobb_douglas", keys, economy.n_agents, money_key, np.array(A), np.array(lg))
        kinds = {type(u) for u in utils}
        if len(kinds) == 1 and kinds <= {Complements, PerfectSubstitutes}:
            alphas = {u.alpha for u in utils}
            pairs = {u.goods for u in utils}
            if len(alphas) == 1 and pairs == {(0, 1)} and economy.n_goods == 2 and len(keys) == 2:
                family = "complements" if Complements in kinds else "substitutes"
                return cls(family, keys, economy.n_agents, money_key, alpha=alphas.pop())
        raise DomainError("no analytic entropy model for this population")

    # -- helpers ----------------------------------------------------------

    @property
    def order(self) -> str:
        return EXACT if self.family == "cobb_douglas" else EXTENSIVE

    @property
    def metadata(self) -> dict:
        meta = {"family": self.family, "order": self.order, "agent_count": self.agent_count}
        if self.alpha is not None:
            meta["alpha"] = self.alpha
            meta["free_energy_constant"] = 0.0 - self.agent_count * math.lgamma(self.alpha)
            meta["note"] = (
                "free energy includes the -N*lgamma(alpha) normalisation; "
                "entropy is defined up to an additive constant per economy"
            )
        return meta

    @property
    def money_index(self) -> int:
        return self.keys.index(self.money_key) if self.money_key is not None else 0

    @property
    def good_indices(self) -> list:
        mi = self.money_index
        return [q for q in range(len(self.keys)) if q != mi]

    def index(self, key) -> int:
        return self.keys.index(QuantityKey(*key))

    def macro(self, *totals) -> MacroState:
        """Macro-state from totals given in key order."""
        if len(totals) == 1 and np.ndim(totals[0]) == 1:
            totals = tuple(totals[0])
        if len(totals) != len(self.keys):
            raise ValueError(f"expected {len(self.keys)} totals, got {len(totals)}")
        return MacroState(dict(zip(self.keys, (float(t) for t in totals))), self.agent_count)

    def vector(self, macro: MacroState) -> np.ndarray:
        try:
            return np.array([macro.totals[k] for k in self.keys], dtype=float)
        except KeyError as exc:
            raise DomainError(f"macro-state lacks conserved quantity {exc}") from None

    def point_vector(self, point: "CanonicalPoint") -> np.ndarray:
        v = np.empty(len(self.keys))
        v[self.money_index] = point.beta
        nu = np.atleast_1d(np.asarray(point.nu, dtype=float))
        if len(nu) != len(self.keys) - 1:
            raise ValueError(f"expected {len(self.keys) - 1} good values, got {len(nu)}")
        v[self.good_indices] = nu
        return v

    def point_from_vector(self, v) -> "CanonicalPoint":
        v = np.asarray(v, dtype=float)
        return CanonicalPoint(float(v[self.money_index]), tuple(float(x) for x in v[self.good_indices]))

    def describe(self) -> dict:
        d = dict(self.metadata)
        d["keys"] = [k.label() for k in self.keys]
        if self.exponent_sums is not None:
            d["exponent_sums"] = self.exponent_sums.tolist()
        return d


@dataclass(frozen=True)
class CanonicalPoint:
    """Canonical parameters: coolness for money, values for the other goods."""

    beta: float
    nu: tuple = ()

    def __post_init__(self):
        nu = tuple(float(x) for x in np.atleast_1d(self.nu))
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "beta", float(self.beta))
        if not (self.beta > 0 and all(x > 0 for x in nu)):
            raise DomainError(f"canonical parameters must be positive, got beta={self.beta}, nu={nu}")


class LegendreResult(NamedTuple):
    value: float
    point: CanonicalPoint
    vector: np.ndarray
    iterations: int
    residual: float


class CoolnessEstimate(NamedTuple):
    beta: float
    stderr: float
    n_samples: int
    ess: float


# --------------------------------------------------------------------------
# free energy in log coordinates y = log(nu)
# --------------------------------------------------------------------------


def _log_g(r, a):
    # log of (1 - exp(-a r)) / (exp(r) - 1), the scaled substitutes divided difference
    if abs(r) < SUBSTITUTES_WINDOW:
        return math.log(a) - (a + 1) * r / 2 + (a * a - 1) * r * r / 24
    if r < 0:
        return -(a + 1) * r + _log_g(-r, a)
    return math.log(-math.expm1(-a * r)) - r - math.log(-math.expm1(-r))


def _g1(r, a):
    if abs(r) < _DERIV_WINDOW:
        return -(a + 1) / 2 + (a * a - 1) * r / 12 - (a**4 - 1) * r**3 / 720
    if r < 0:
        return -(a + 1) - _g1(-r, a)
    ear = a * r
    first = a / math.expm1(ear) if ear < 700 else 0.0
    return first + 1.0 / math.expm1(-r)


def _g2(r, a):
    if abs(r) < _DERIV_WINDOW:
        return (a * a - 1) / 12 - (a**4 - 1) * r * r / 240
    r = abs(r)
    ear = a * r
    first = a * a / (math.expm1(ear) * -math.expm1(-ear)) if ear < 700 else 0.0
    return -first + 1.0 / (math.expm1(-r) * -math.expm1(r))


def _free_energy_y(model: EntropyModel, y):
    """Free energy, gradient and Hessian with respect to ``y = log(nu)``."""
    y = np.asarray(y, dtype=float)
    N = model.agent_count
    if model.family == "cobb_douglas":
        A = model.exponent_sums
        F = float(np.dot(A, y) - model.lgamma_sums.sum())
        return F, A.astype(float).copy(), np.zeros((len(y), len(y)))
    a = model.alpha
    mi = model.money_index
    gi = model.good_indices[0]
    yb, yn = y[mi], y[gi]
    grad = np.empty(2)
    hess = np.empty((2, 2))
    if model.family == "complements":
        lse = np.logaddexp(yb, yn)
        sb, sn = math.exp(yb - lse), math.exp(yn - lse)
        F = N * ((a - 1) * lse + yb + yn - math.lgamma(a))
        grad[mi] = N * ((a - 1) * sb + 1)
        grad[gi] = N * ((a - 1) * sn + 1)
        c = N * (a - 1) * sb * sn
        hess[mi, mi] = hess[gi, gi] = c
        hess[mi, gi] = hess[gi, mi] = -c
        return F, grad, hess
    if model.family == "substitutes":
        r = yn - yb
        F = N * (-math.lgamma(a) + (a + 1) * yb - _log_g(r, a))
        g1 = _g1(r, a)
        g2 = _g2(r, a)
        grad[mi] = N * ((a + 1) + g1)
        grad[gi] = -N * g1
        hess[mi, mi] = hess[gi, gi] = -N * g2
        hess[mi, gi] = hess[gi, mi] = N * g2
        return F, grad, hess
    raise DomainError(f"unknown family {model.family!r}")


def free_energy(model: EntropyModel, point: CanonicalPoint) -> float:
    """``F = -log Z_c`` at canonical parameters ``point``."""
    v = model.point_vector(point)
    return _free_energy_y(model, np.log(v))[0]


def equilibrium_amounts(model: EntropyModel, point: CanonicalPoint) -> MacroState:
    """Mean totals conjugate to ``point``: the gradient of the free energy."""
    v = model.point_vector(point)
    _, gy, _ = _free_energy_y(model, np.log(v))
    return model.macro(*(gy / v))


# --------------------------------------------------------------------------
# microcanonical quantities
# --------------------------------------------------------------------------


def _cd_terms(model: EntropyModel, P: np.ndarray) -> np.ndarray:
    A = model.exponent_sums
    terms = np.empty(len(P))
    for q, (a, p) in enumerate(zip(A, P)):
        if p < 0 or not math.isfinite(p):
            raise DomainError(f"total {p} for {model.keys[q].label()} is not admissible")
        if p == 0:
            if a != 1:
                raise DomainError(
                    f"zero total for {model.keys[q].label()} with exponent sum {a} != 1"
                )
            terms[q] = model.lgamma_sums[q]
        else:
            terms[q] = (a - 1) * math.log(p) + model.lgamma_sums[q] - math.lgamma(a)
    return terms


def log_partition(model: EntropyModel, macro: MacroState) -> float:
    """``log Z`` at the macro-state (exact for Cobb-Douglas, extensive otherwise)."""
    P = model.vector(macro)
    if model.family == "cobb_douglas":
        return math.fsum(_cd_terms(model, P))
    return legendre_entropy(model, macro).value


def log_partition_gradient(model: EntropyModel, macro: MacroState) -> np.ndarray:
    """Derivative of ``log Z`` with respect to every conserved total, in key order."""
    P = model.vector(macro)
    if model.family == "cobb_douglas":
        if np.any(P <= 0):
            raise DomainError("derivatives need strictly positive totals")
        return (model.exponent_sums - 1) / P
    return legendre_entropy(model, macro).vector


def coolness(model: EntropyModel, macro: MacroState) -> float:
    """Derivative of ``log Z`` with respect to the distinguished money total."""
    if model.money_key is None:
        raise DomainError("coolness needs a simple economy")
    beta = float(log_partition_gradient(model, macro)[model.money_index])
    if not beta > 0:
        raise DomainError(f"coolness {beta} is not positive at this macro-state")
    return beta


def good_values(model: EntropyModel, macro: MacroState):
    """``(beta, nu, price)`` with ``price = nu / beta`` componentwise."""
    grad = log_partition_gradient(model, macro)
    beta = float(grad[model.money_index])
    nu = grad[model.good_indices]
    if not beta > 0 or np.any(nu <= 0):
        raise DomainError(f"good values not all positive: beta={beta}, nu={nu}")
    return beta, nu, nu / beta


def legendre_entropy(
    model: EntropyModel,
    macro: MacroState,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> LegendreResult:
    """Minimise ``nu . P - F(nu)`` over positive ``nu`` by damped Newton in ``log nu``.

    Converged when ``max|P - grad F| < tol * N``.  Returns the minimum (the
    entropy at extensive order) and the minimiser.
    """
    P = model.vector(macro)
    if np.any(P <= 0):
        raise DomainError("Legendre inversion needs strictly positive totals")
    N = model.agent_count
    if model.family == "cobb_douglas":
        y = np.log(model.exponent_sums / P)
    else:
        y = np.log(N / P)

    def objective(y):
        F, gy, hy = _free_energy_y(model, y)
        nu = np.exp(y)
        return float(np.dot(nu, P) - F), nu * P - gy, np.diag(nu * P) - hy, nu

    phi, g, H, nu = objective(y)
    trace = []
    for it in range(max_iter + 1):
        resid = float(np.max(np.abs(g / nu)))
        trace.append((it, phi, resid))
        if resid < tol * N:
            return LegendreResult(phi, model.point_from_vector(nu), nu, it, resid)
        if it == max_iter:
            break
        lam = 0.0
        scale = float(np.max(np.abs(np.diag(H)))) or 1.0
        while True:
            try:
                L = np.linalg.cholesky(H + lam * np.eye(len(y)))
                break
            except np.linalg.LinAlgError:
                lam = max(2 * lam, 1e-8 * scale)
        step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        slope = float(np.dot(g, step))
        while True:
            y_new = y + t * step
            if np.all(np.abs(y_new) < 700):
                phi_new, g_new, H_new, nu_new = objective(y_new)
                if phi_new <= phi + 1e-4 * t * slope or t < 1e-12:
                    break
            t *= 0.5
            if t < 1e-12:
                break
        y, phi, g, H, nu = y_new, phi_new, g_new, H_new, nu_new
        if np.any(np.abs(y) > 60):
            raise LegendreError(
                "minimiser escapes to the boundary of the canonical domain",
                {"trace": trace, "y": y.tolist()},
            )
    raise LegendreError(
        f"Legendre inversion did not converge in {max_iter} iterations",
        {"trace": trace, "y": y.tolist(), "residual": trace[-1][2]},
    )


def thermo_integrate_logZ(model: EntropyModel, macro: MacroState, m_from: float, m_to: float) -> float:
    """Change in ``log Z`` between two money totals by quadrature of the coolness."""
    if model.money_key is None:
        raise DomainError("thermodynamic integration over money needs a simple economy")
    if m_from == m_to:
        return 0.0
    if min(m_from, m_to) <= 0:
        raise DomainError("integration interval must stay at positive money")

    def beta(m):
        return coolness(model, macro.with_total(model.money_key, m))

    value, _ = integrate.quad(beta, m_from, m_to, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(value)


def estimate_coolness_from_pot(pot_series: Sequence[float], min_samples: int = 1000) -> CoolnessEstimate:
    """Exponential-rate fit ``1/mean`` to pot occupancies, with jackknife error.

    Valid when the pot is small compared with the economy's money, so the
    occupancy law ``Z(M' - m_T)`` is locally exponential.  The jackknife
    runs over contiguous blocks, which also absorbs serial correlation.
    """
    x = np.asarray(pot_series, dtype=float)
    if x.ndim != 1 or len(x) < min_samples:
        raise ValueError(f"need at least {min_samples} pot samples, got {len(x)}")
    if np.any(x < 0):
        raise ValueError("pot occupancies must be non-negative")
    mean = x.mean()
    if not mean > 0:
        raise ValueError("pot series is identically zero; the rate is undefined")
    n_blocks = 100
    size = len(x) // n_blocks
    sums = x[: size * n_blocks].reshape(n_blocks, size).sum(axis=1)
    total = sums.sum()
    loo = (n_blocks - 1) * size / (total - sums)
    stderr = math.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean()) ** 2))
    return CoolnessEstimate(1.0 / mean, stderr, len(x), effective_sample_size(x))


def record(model: EntropyModel, macro: MacroState, quantity: str, value, oracle_deviation=None) -> dict:
    """JSON record of one computed quantity."""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    return {
        "model": model.describe(),
        "macro": macro.to_dict(),
        "quantity": quantity,
        "value": value,
        "order": model.order,
        "oracle_deviation": oracle_deviation,
    }
