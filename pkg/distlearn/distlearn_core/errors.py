"""Exceptions raised by the distribution learning core.

All of them derive from ``ValueError`` so callers that guard loading and
validation with ``except ValueError`` keep working.
"""


class DistLearnError(ValueError):
    pass


class ProblemSpecError(DistLearnError):
    """A problem document or one of its fields is invalid."""


class IdentifiabilityError(DistLearnError):
    """The stacked sample generation matrix does not have full column rank."""


class SingularModelError(DistLearnError):
    """A Fisher matrix is singular, ill conditioned, or an output has zero probability."""


class EstimationError(DistLearnError):
    """An estimator was called with inputs it cannot handle (e.g. an unpulled arm)."""


class PolicyError(DistLearnError):
    """A policy is misconfigured (unknown kind, missing allocation fraction)."""
