"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation
    (non-SPD matrix, zero density at a required point, vanishing second
    derivative, ...)."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to converge where the caller required it."""


class ParseError(ValueError):
    """A data file could not be parsed; message includes the line number."""


class GridCoverageError(DomainError):
    """A quadrature grid does not hold enough of the reference density's mass."""


class ConfigError(ValueError):
    """A run configuration document is malformed or contains unknown keys."""
