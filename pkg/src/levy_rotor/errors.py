"""Exception hierarchy shared by the library and the command line."""


class LevyRotorError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LevyRotorError, ValueError):
    exit_code = 2


class DomainError(LevyRotorError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 4


class CapabilityError(LevyRotorError):
    """The request exceeds what the configured evaluator supports."""

    exit_code = 4


class NumericalError(LevyRotorError, ArithmeticError):
    exit_code = 4


class LatticeGrowthRequired(LevyRotorError):
    """Raised when a wave function lacks headroom for the next kick.

    The caller is expected to grow the lattice and retry; nothing is truncated.
    """

    def __init__(self, needed: int, available: int):
        super().__init__(f"lattice headroom {available} < required {needed}")
        self.needed = needed
        self.available = available
