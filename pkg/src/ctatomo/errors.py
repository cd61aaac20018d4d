"""Exception types shared across the toolkit."""

from __future__ import annotations


class CtatomoError(Exception):
    """Base class for all toolkit errors."""


class ChartDomainError(CtatomoError):
    """A point or field was referenced outside the chart domain."""


class TrappedRayError(CtatomoError):
    """A traced geodesic exceeded the arc-length cap without exiting.

    Such rays carry no usable data and must be excluded from ray sets.
    """

    def __init__(self, message: str, arc_length: float | None = None):
        super().__init__(message)
        self.arc_length = arc_length


class InterpolationError(CtatomoError):
    """Requested sample points fall outside the field's grid hull."""


class ConfigurationError(CtatomoError):
    """Invalid or inconsistent configuration (counts, supports, names)."""


class SupportViolationError(ConfigurationError):
    """A field that must be compactly supported is nonzero at its ends."""


class NumericError(CtatomoError):
    """A numerical solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None, condition: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.condition = condition


class CertificationError(CtatomoError):
    """Certification was asked to run on data that are not gauge-trivial."""


class ValidationError(CtatomoError):
    """Scenario validation failed; carries one message per offending key."""

    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = list(messages)
