"""Exception hierarchy shared by all torusflow modules."""


class TorusFlowError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(TorusFlowError, ValueError):
    """Malformed arguments: non-positive coefficients, bad points, empty samples."""


class InvalidSpecError(TorusFlowError, ValueError):
    """A ceiling or reparametrization spec without a positivity certificate."""


class ResourceLimitError(TorusFlowError):
    """A construction would exceed the configured digit budget or cap."""

    def __init__(self, message, level=None, coordinate=None):
        super().__init__(message)
        self.level = level
        self.coordinate = coordinate


class InsufficientDepthError(TorusFlowError):
    """The stored continued-fraction depth cannot answer the query."""


class GrowthConditionError(TorusFlowError):
    """A seeded coefficient violates the exact growth profile."""


class ResonanceError(TorusFlowError, ZeroDivisionError):
    """q * alpha is an integer for the rational stand-in, so X(m) is 0/0."""

    def __init__(self, j, n):
        super().__init__(f"resonant denominator at direction {j}, level {n}")
        self.j = j
        self.n = n


class BoundaryTieError(TorusFlowError):
    """The hitting count is numerically ambiguous between two neighbours."""

    def __init__(self, lower, upper, gap):
        super().__init__(
            f"boundary tie between N={lower} and N={upper} (gap {gap:.3e})"
        )
        self.lower = lower
        self.upper = upper
        self.gap = gap


class WindowError(TorusFlowError):
    """A time or iterate count lies outside the required stretch window."""


class UnsupportedShapeError(TorusFlowError):
    """The multi-interval is not of the canonical J_n form."""


class InfeasibleMarginError(TorusFlowError):
    """The margin theta = t**(-1/4 + eps) is not below 1/4."""


class SupportViolationError(TorusFlowError):
    """An observable's temporal bump escapes the admissible time set."""
