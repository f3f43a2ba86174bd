"""Exception types shared across the package."""


class GenMIAError(Exception):
    """Base class for all errors raised by genmia."""


class ConfigError(GenMIAError, ValueError):
    pass


class InvalidArchitectureError(ConfigError):
    pass


class ShapeError(GenMIAError, ValueError):
    pass


class CacheError(GenMIAError, RuntimeError):
    """A forward cache was used with a network it was not produced by."""


class TrainingDivergedError(GenMIAError, ArithmeticError):
    pass


class EmptyRequestError(GenMIAError, ValueError):
    pass


class InsufficientDataError(GenMIAError, ValueError):
    pass


class MissingInputsError(GenMIAError, ValueError):
    pass


class UnsupportedDensityError(GenMIAError, TypeError):
    pass


class DegenerateLabelsError(GenMIAError, ValueError):
    pass


class DuplicateTagError(GenMIAError, ValueError):
    pass
