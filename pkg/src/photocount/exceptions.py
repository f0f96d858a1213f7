"""Exception types raised by photocount."""


class PhotocountError(Exception):
    """Base class for library errors."""


class InvariantError(PhotocountError, ValueError):
    """A value violates a documented invariant (negative probability, eta > 1, ...)."""


class TruncationMismatchError(PhotocountError, ValueError):
    pass


class NonInvertibleChannelError(PhotocountError, ValueError):
    """Raised for a blind detector (efficiency 0), whose loss channel has no inverse."""


class ImpossibleObservationError(PhotocountError, ValueError):
    """The observed count has zero probability under the prior and channel."""
