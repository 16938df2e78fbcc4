"""Statistical mechanics of exchange economies.

Agents with fixed utility functions trade conserved goods in random
pairwise encounters.  The package simulates those dynamics, computes the
partition function ``Z`` of a macro-state and its derivatives, and checks
that trader interventions never lower total ``log Z``.
"""

from .axioms import (
    AddMoney,
    BreakContact,
    MakeContact,
    StatePair,
    SystemState,
    TradeAtPrice,
    TransitionPlan,
    accessible,
    calibrated_entropy,
    execute_plan,
    financial_equilibrium,
    flanking_states,
    match_money,
    plan_transition,
    run_axiom_suite,
)
from .dynamics import (
    Financial,
    Trading,
    Trajectory,
    financial_contact_session,
    simulate,
    stationary_state,
    trading_contact_session,
)
from .economy import (
    MONEY,
    CobbDouglas,
    Complements,
    Economy,
    MacroState,
    MicroState,
    PerfectSubstitutes,
    QuantityKey,
    conserved_quantities,
    macro_state_of,
    make_economy,
    scale_economy,
    scale_state,
    set_contact,
)
from .exceptions import (
    AssumptionError,
    ConfigError,
    ConstructionError,
    DomainError,
    LegendreError,
    PlanningError,
    SamplingError,
)
from .partition import (
    CanonicalPoint,
    EntropyModel,
    coolness,
    equilibrium_amounts,
    estimate_coolness_from_pot,
    free_energy,
    good_values,
    legendre_entropy,
    log_partition,
    thermo_integrate_logZ,
)
from .sampling import sample_budget_line, sample_pot_exchange, sample_redistribution

__version__ = "0.1.0"
