"""Exception hierarchy. Each top-level class maps to one CLI exit code."""


class SymnormError(Exception):
    exit_code = 1


class ConfigError(SymnormError):
    exit_code = 2


class DataError(SymnormError, ValueError):
    exit_code = 3


class DimensionError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class NumericalError(SymnormError, ArithmeticError):
    exit_code = 4


class DegenerateMeanError(NumericalError):
    """Centroid undefined: resultant length or smallest singular value too small."""


class DispersionError(NumericalError):
    """Samples too spread out for a moment-based fit."""


class SaturationError(NumericalError):
    """Moment ratio at or above 1; concentration is unbounded."""


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
