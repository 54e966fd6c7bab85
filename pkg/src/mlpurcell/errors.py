"""Exception hierarchy shared by all modules."""


class MLPurcellError(Exception):
    """Base class for library errors."""


class InvalidDimensionError(MLPurcellError, ValueError):
    pass


class NumericalError(MLPurcellError, ArithmeticError):
    """A numerical routine failed its accuracy contract.

    ``residual`` carries the offending residual (or error estimate) when known.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedConfigurationError(MLPurcellError, ValueError):
    pass


class AmbiguityError(MLPurcellError, ValueError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class FitError(NumericalError):
    pass


class ConfigError(MLPurcellError, ValueError):
    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
