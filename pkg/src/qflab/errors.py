"""Exception types shared across the package."""


class QFLabError(Exception):
    """Base class for all qflab errors."""


class PolicyError(QFLabError, ValueError):
    """A contribution or parameter violates the active funding rule's policy
    (e.g. a negative-sign entry under a rule that forbids defunding)."""


class DivergentGradientError(QFLabError, ValueError):
    """The funding gradient is unbounded at the requested point (zero
    contribution under a square-root-type rule)."""


class NoSolutionError(QFLabError, ValueError):
    """An inverse problem has no solution in the admissible range
    (e.g. inverting a marginal value above its attainable maximum)."""


class ScenarioFormatError(QFLabError, ValueError):
    """A scenario file or contributions table failed validation."""
