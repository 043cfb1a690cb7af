"""Exception types shared across the toolkit."""


class LqSharedError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(LqSharedError, ValueError):
    """Matrix dimensions are inconsistent with the game definition."""


class NoConvergenceError(LqSharedError):
    """Iterative solver hit its iteration cap; the game is likely ill-posed."""


class NotStabilizableError(LqSharedError):
    """No stabilizing solution exists for the requested problem."""


class UnstableError(LqSharedError):
    """Closed loop is not Hurwitz; the requested evaluation is undefined."""


class NonFiniteError(LqSharedError):
    """A trajectory or sample diverged beyond the overflow guard."""


class NoStableCandidateError(LqSharedError):
    """Every candidate evaluated by the designer yielded an unstable loop."""


class InfeasibleError(LqSharedError, ValueError):
    """Constraint set is empty (reserved; cannot occur with pin normalization)."""


class ConfigError(LqSharedError, ValueError):
    """A configuration file failed schema validation."""
