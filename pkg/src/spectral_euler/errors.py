"""Exception types shared across the package."""


class SpectralEulerError(Exception):
    """Base class for all package-specific errors."""


class LatticeError(SpectralEulerError):
    """Invalid lattice construction parameters."""


class FieldFormatError(SpectralEulerError):
    """A spectral field violates its structural invariants (shape, symmetry)."""


class MeasureParameterError(SpectralEulerError):
    """Measure parameters outside the admissible range (e.g. beta <= -1 + 1e-6)."""


class RejectionSamplingError(SpectralEulerError):
    """Rejection sampler acceptance rate collapsed; density bound too loose."""


class OverflowGuardError(SpectralEulerError):
    """A guarded quantity (trajectory norm, Gibbs exponent) left the safe range."""


class HistogramCoverageError(SpectralEulerError):
    """Too much histogram mass in boundary bins for a trustworthy estimate."""


class DigestMismatchError(SpectralEulerError):
    """A consumed file does not match its manifest digest."""
