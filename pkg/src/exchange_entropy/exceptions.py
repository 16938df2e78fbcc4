"""Exception types raised across the package."""


class DomainError(ValueError):
    """A macro-state or canonical point lies outside a model's admissible domain."""


class SamplingError(RuntimeError):
    """A target density could not be sampled (e.g. zero everywhere on its support)."""


class LegendreError(RuntimeError):
    """The Legendre inversion failed to converge.

    ``diagnostics`` carries the iteration trace so callers can report where
    the solver stalled.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PlanningError(RuntimeError):
    """No admissible chain of trader actions could be constructed."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ConstructionError(RuntimeError):
    """A state construction (e.g. a flanking path) left the admissible domain."""


class AssumptionError(RuntimeError):
    """A modelling assumption (monotone coolness, bracketing) was violated."""


class ConfigError(ValueError):
    """Scenario configuration failed validation; ``path`` locates the field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
