"""Exception types shared across the package."""


class FcrsegError(Exception):
    """Base class for all package-specific errors."""


class DataError(FcrsegError):
    """Malformed or inconsistent input data."""


class ConfigError(FcrsegError):
    """Invalid configuration value or combination."""


class ShapeError(FcrsegError):
    """An array does not match the expected shape contract."""


class CapacityError(FcrsegError):
    """Input exceeds a hard scale guard."""


class TrainingError(FcrsegError):
    """Optimization aborted, e.g. on a non-finite loss."""
