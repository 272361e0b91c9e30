"""Semantic exception hierarchy shared by all gpabc modules."""


class GpAbcError(Exception):
    """Base class for all errors raised by gpabc."""


class DomainError(GpAbcError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class IllConditionedError(GpAbcError, ArithmeticError):
    """A linear-algebra factorisation failed even after jitter escalation."""


class DegenerateWeightsError(GpAbcError, ArithmeticError):
    """Importance weights are all zero or non-finite."""


class OptimizationError(GpAbcError, RuntimeError):
    """Global optimisation could not find any finite objective value."""


class ConfigError(GpAbcError, ValueError):
    """An experiment configuration is inconsistent or unresolvable."""


class SimulatorError(GpAbcError, RuntimeError):
    """A simulator returned non-finite output even after a retry."""
