"""Exception types shared across the package."""


class BandletError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(BandletError, ValueError):
    """A numeric parameter is outside its admissible range."""


class InputError(BandletError, ValueError):
    """Array data has the wrong shape, size or contents."""


class OutOfRegimeError(BandletError, ValueError):
    """The noise level lies outside the range covered by the risk bound."""


class SpecError(BandletError, ValueError):
    """A synthetic scene description is invalid."""
