"""Exception types shared across the package."""


class InvalidConfig(ValueError):
    """Network configuration violates a structural constraint."""


class DimensionMismatch(ValueError):
    """Operands do not conform (wrong matrix/vector dimensions)."""


class OddBitCount(ValueError):
    """QPSK modulation needs an even number of bits."""


class NumericalError(RuntimeError):
    """Base class for runtime numerical failures (CLI exit code 3)."""


class RankDeficient(NumericalError):
    """A matrix that must have full column rank numerically does not.

    For random continuous channels this signals a degenerate draw; callers
    either resample the channel or abort.
    """


class DegenerateGeometry(NumericalError):
    """The constrained null space used to build a projector row is not
    one-dimensional. Cannot occur for valid configs with the default slot
    plan; guards misuse with hand-built plans."""


class NotUnimodal(NumericalError):
    """The beamforming-constant profile shows multiple separated maxima and
    even grid refinement could not produce a stable argmax."""


class FactorizationMismatch(NumericalError):
    """The projected end-to-end channel disagrees with its closed form
    beyond tolerance."""
