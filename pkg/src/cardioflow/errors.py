"""Exception types shared across the package."""


class CardioflowError(Exception):
    """Base class for all package-specific errors."""


class DimsTooSmall(CardioflowError):
    pass


class HeaderMismatch(CardioflowError):
    pass


class VolumeParseError(CardioflowError):
    pass


class EmptyMask(CardioflowError):
    pass


class BadKernel(CardioflowError):
    pass


class NoSurface(CardioflowError):
    pass


class MeshNotManifold(CardioflowError):
    pass


class NonManifold(CardioflowError):
    pass


class KTooLarge(CardioflowError):
    pass


class DegenerateTriangle(CardioflowError):
    pass


class ConvergenceFailure(CardioflowError):
    pass


class InsufficientSpectrum(CardioflowError):
    pass


class BasisTooSmall(CardioflowError):
    pass


class OutOfGrid(CardioflowError):
    pass


class NoConstraints(CardioflowError):
    pass


class TooManyLevels(CardioflowError):
    pass


class NonFiniteLoss(CardioflowError):
    pass


class EmptyRegion(CardioflowError):
    pass


class AllDegenerate(CardioflowError):
    pass


class DegenerateGeometry(CardioflowError):
    pass


class SpecOutOfBounds(CardioflowError):
    pass


class IoError(CardioflowError):
    pass


class RankDeficientWarning(UserWarning):
    """Descriptor system was rank deficient; a minimum-norm solution was returned."""
