"""Exception types raised by the library.

Every failure mode that callers are expected to distinguish gets its own
class; all inherit from :class:`FinslerError` so a bare ``except
FinslerError`` catches anything raised deliberately by this package.
"""
from __future__ import annotations


class FinslerError(Exception):
    """Base class for all errors raised by finslerkit."""


class DomainError(FinslerError):
    """A chart point lies outside (or too close to the boundary of) a patch."""


class DegenerateInputError(FinslerError):
    """An input is structurally unusable (zero vector, empty basis, ...)."""


class NumericError(FinslerError):
    """A numerical procedure produced non-finite or inconsistent values."""


class SingularityError(FinslerError):
    """The fundamental tensor is unavailable or numerically singular."""


class StiffnessError(FinslerError):
    """The adaptive integrator's step size collapsed away from any boundary."""


class ExpDomainError(DomainError):
    """The exponential-map geodesic left the patch before unit time."""


class InversionError(FinslerError):
    """Shooting for the exponential inverse did not converge; the target is
    outside the certified normal neighbourhood of the base point."""


class DegenerateMetricError(FinslerError):
    """No usable normal radius could be certified at the given point."""


class EmanatingError(FinslerError):
    """No emanating point could be produced, even after shrinking delta."""


class DegenerateConfigurationError(FinslerError):
    """Base points fail the spanning condition needed for a distance chart."""


class ChartConstructionError(FinslerError):
    """Distance-chart construction failed; ``stage`` names the failed step."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage


class ChartEvaluationError(FinslerError):
    """A distance coordinate could not be evaluated; ``index`` names which."""

    def __init__(self, message: str, index: int = -1):
        super().__init__(message)
        self.index = index


class OutsideCertifiedError(FinslerError):
    """A chart inversion target lies outside the certified image box."""


class NonsmoothMapError(FinslerError):
    """Finite differences of a map probe failed to stabilise."""


class NotDistancePreservingError(FinslerError):
    """A map handed to the isometry reconstruction fails the distance audit.

    ``witness`` holds ``(p, q, rho_source, rho_target)`` for the worst pair.
    """

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class NotAnIsometrySeedError(FinslerError):
    """A prescribed derivative fails to preserve the norm at its base point."""


class PreimageSearchError(FinslerError):
    """No preimage of a base point could be located numerically."""


class NotReversibleError(FinslerError):
    """A submetry operation was invoked on a non-reversible metric."""


class NotASubmetryError(FinslerError):
    """The sandwich construction could not locate the required fiber points."""


class ConfigError(FinslerError):
    """A harness scenario configuration is malformed."""
