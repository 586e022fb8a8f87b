"""Exception types raised across the package."""


class VspsError(Exception):
    """Base class for all package errors."""


class NonPhysical(VspsError, ValueError):
    """An input lies outside the physically meaningful domain."""


class SpeedBoundViolation(VspsError):
    """Rotor speed left the hard simulation-abort band."""

    def __init__(self, message, time=None, unit=None):
        super().__init__(message)
        self.time = time
        self.unit = unit


class OutOfChart(VspsError, ValueError):
    """Query point lies outside the hill-chart hull."""


class DegenerateOperatingPoint(VspsError, ValueError):
    """An analytic expression is undefined at the requested operating point."""


class DimensionMismatch(VspsError, ValueError):
    pass


class SingularInnovation(VspsError, ArithmeticError):
    pass


class MaxIterations(VspsError):
    """QP solver hit its iteration cap. ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleQP(VspsError):
    pass


class EmptyTrace(VspsError, ValueError):
    pass


class NoFeasiblePoint(VspsError):
    pass


class MismatchedScenarios(VspsError, ValueError):
    pass


class ConfigError(VspsError, ValueError):
    """Scenario configuration failed validation.

    ``issues`` is a list of ``(field_path, message)`` pairs.
    """

    def __init__(self, message, issues=()):
        super().__init__(message)
        self.issues = list(issues)
