"""Exception types shared across the package."""


class NsnnError(Exception):
    """Base class for all package errors."""


class ShapeError(NsnnError, ValueError):
    pass


class ParameterError(NsnnError, ValueError):
    pass


class CapacityError(NsnnError, RuntimeError):
    """Raised when an exhaustive computation would exceed its guard."""


class TrainingError(NsnnError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DivergenceError(NsnnError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateError(NsnnError, ValueError):
    pass


class InsufficientDataError(NsnnError, ValueError):
    pass


class AttackError(NsnnError, RuntimeError):
    pass


class ConfigError(NsnnError, ValueError):
    pass


class VersionError(NsnnError, ValueError):
    pass


class MalformedFileError(NsnnError, ValueError):
    pass
