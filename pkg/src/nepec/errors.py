"""Exception hierarchy."""


class NepecError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NepecError, ValueError):
    """An input violates a documented precondition."""


class NumericalConsistencyError(NepecError, ArithmeticError):
    """A computed quantity failed a consistency check (e.g. complex expectation)."""


class InfeasibleRepresentation(NepecError):
    """No quasi-probability representation exists over the given basis."""


class DegenerateSplit(NepecError):
    """The representation has no negative part, so the canonical split is undefined."""


class ConfigError(NepecError, ValueError):
    """An experiment configuration is malformed."""
