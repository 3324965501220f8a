"""Exception types shared across the package."""


class LaserMarlError(Exception):
    """Base class for all package errors."""


class ConfigError(LaserMarlError, ValueError):
    """A configuration field is missing, unknown or out of range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class StateError(LaserMarlError, RuntimeError):
    """An operation was requested in a state that does not allow it."""


class ArgumentError(LaserMarlError, ValueError):
    pass


class ShapeError(LaserMarlError, ValueError):
    pass


class NumericError(LaserMarlError, ArithmeticError):
    pass


class CompatibilityError(LaserMarlError):
    """A checkpoint was produced for a different world configuration."""
