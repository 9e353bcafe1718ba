"""Exception types raised across the package."""


class CoordRegError(Exception):
    """Base class for all package errors."""


class InvariantError(CoordRegError, ValueError):
    """Input data violates a structural invariant (e.g. a_ii != 0)."""


class DimensionError(CoordRegError, ValueError):
    """Matrix shapes are inconsistent."""


class SchemaError(CoordRegError, ValueError):
    """Scenario or gains document is malformed."""


class SpectralViolation(CoordRegError):
    """A computed Laplacian spectrum contradicts the expected leader-follower spectral structure."""


class NotSatisfiable(CoordRegError):
    """Switching schedule is eventually always disconnected."""


class Unsolvable(CoordRegError):
    """Regulator equations have no solution within tolerance."""


class NotHurwitz(CoordRegError):
    """A matrix required to be Hurwitz is not."""


class NotObservable(CoordRegError):
    """A pair required to be observable is not."""


class ObservabilityViolation(NotObservable):
    """The observability assumption needed for redundant-mode removal fails."""


class SolverDivergence(CoordRegError):
    """An iterative matrix-equation solver failed to converge."""


class RankDeficiency(CoordRegError):
    """A transform expected to have full column rank does not."""


class CertificateUnavailable(CoordRegError):
    """No Lyapunov certificate construction is available for a topology."""


class NonFinite(CoordRegError, FloatingPointError):
    """Simulated state exceeded the overflow guard."""
