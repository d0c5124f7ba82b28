"""Exception types raised across the package."""


class FlatwingError(Exception):
    """Base class for all package errors."""


class SingularVelocity(FlatwingError, ValueError):
    """Velocity norm below the singularity guard."""


class SingularVertical(FlatwingError, ValueError):
    """Velocity (nearly) parallel to the vertical axis."""


class ZeroNormalLoad(FlatwingError, ValueError):
    """Vertical load factor too small to define a bank angle."""


class OutOfDomain(FlatwingError, ValueError):
    """Evaluation time outside [0, T]."""


class NumericalSingular(FlatwingError, ArithmeticError):
    """Banded factorization of the boundary/continuity system failed."""


class DegenerateEndpoints(FlatwingError, ValueError):
    """Start and goal pose coincide."""


class InitFailure(FlatwingError, RuntimeError):
    """Initial guess could not be generated."""


class Infeasible(FlatwingError, RuntimeError):
    """Iteration budget exhausted with constraints still violated."""


class LineSearchFailure(FlatwingError, RuntimeError):
    """Line search could not find an acceptable step."""


class InvalidScenario(FlatwingError, ValueError):
    """Scenario file or object fails validation."""
