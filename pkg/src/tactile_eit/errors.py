"""Exception types shared across the package."""


class TactileEitError(Exception):
    """Base class for all package-specific errors."""


class MeshResolutionError(TactileEitError):
    """Target element size cannot resolve lattice channels or electrodes."""


class SingularSystemError(TactileEitError):
    """Stiffness assembly received a non-positive conductivity."""


class SolverDivergenceError(TactileEitError):
    """Linear solve failed to reach the required residual."""


class OutOfDomainError(TactileEitError):
    """A touch lies (partly) outside the sensing domain."""


class UnknownTouchIdError(TactileEitError):
    """Move/up event for a touch id that was never put down."""


class DegenerateReferenceError(TactileEitError):
    """A reference voltage magnitude is too small for relative change."""


class HashMismatchError(TactileEitError):
    """Geometry hashes of two objects that must match do not."""


class InsufficientDataError(TactileEitError):
    """Not enough samples to fit a model."""


class ConstantImageError(TactileEitError):
    """Both images are constant; correlation undefined."""


class ZeroReferenceError(TactileEitError):
    """Reference image has zero norm."""


class AsymmetricLayoutError(TactileEitError):
    """Electrode layout is not symmetric under the square's symmetries."""
