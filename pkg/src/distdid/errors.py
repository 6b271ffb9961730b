"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DistDiDError(Exception):
    exit_code = 1


class ConfigError(DistDiDError, ValueError):
    exit_code = 2


class DataError(DistDiDError, ValueError):
    exit_code = 3


class IdentificationError(DistDiDError):
    """A cell required by the design is empty, or the design is misspecified."""

    exit_code = 4


class NumericalError(DistDiDError, ArithmeticError):
    exit_code = 5


class DomainError(NumericalError, ValueError):
    """Argument outside the domain of a link function."""


class GridMismatchError(NumericalError, ValueError):
    pass


class DegenerateBootstrapError(NumericalError):
    pass
