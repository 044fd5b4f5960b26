class RindError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RindError, ValueError):
    pass


class DataError(RindError):
    pass


class LoadError(DataError):
    pass


class ListParseError(DataError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class DecodeError(DataError, ValueError):
    pass


class EncodeError(DataError, ValueError):
    pass


class ShapeError(RindError, ValueError):
    pass


class WeightLoadError(RindError):
    pass


class NumericError(RindError, FloatingPointError):
    pass


class ContractError(RindError, ValueError):
    """Input violates a documented precondition (e.g. unnormalized attention)."""
