"""Error types raised by the power-loop design toolkit."""

from typing import Any, Dict, List, Optional, Sequence


class PowerLoopError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class DomainError(PowerLoopError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NoEquilibriumError(PowerLoopError):
    """The droop balance equations have no solution on the stable branch."""


class DegenerateDroopError(PowerLoopError):
    """Zero P-f droop combined with a frequency setpoint off the grid frequency."""


class UncontrollableError(PowerLoopError):
    """The extended plant fails the controllability rank test."""

    def __init__(self, message: str, rank: int, singular_values: Sequence[float]):
        super().__init__(message)
        self.rank = rank
        self.singular_values = list(singular_values)


class PlacementSingularError(PowerLoopError):
    """Every parameter matrix produced an ill-conditioned similarity transform."""

    def __init__(self, message: str, attempts: List[Dict[str, Any]]):
        super().__init__(message)
        self.attempts = attempts


class NumericalBlowupError(PowerLoopError):
    """A simulated state left the finite/bounded region."""

    def __init__(self, message: str, time: float, state: Sequence[float]):
        super().__init__(message)
        self.time = time
        self.state = list(state)


class NotSettledError(PowerLoopError):
    """A signal is still outside its settling band at the end of the record."""


class ConfigParseError(PowerLoopError):
    """A configuration file is not well-formed JSON/YAML."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


class ConfigValidationError(PowerLoopError):
    """A configuration parsed but violates a field constraint."""

    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}" if field else constraint)
        self.field = field
        self.constraint = constraint
