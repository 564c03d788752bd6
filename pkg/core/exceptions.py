"""
Exception hierarchy.
Every error carries the CLI exit code it maps to.
"""

from typing import List, Optional

from core.constants import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC


class MicrogridError(Exception):
    exit_code = 1


class ConfigError(MicrogridError):
    """Invalid topology, parameter or weight configuration."""

    exit_code = EXIT_CONFIG


class LiftingError(MicrogridError):
    """The lifted model cannot be built or evaluated for the given input."""

    exit_code = EXIT_CONFIG


class ArtifactError(MicrogridError):
    """Missing, empty or unreadable file."""

    exit_code = EXIT_IO


class NumericalError(MicrogridError):
    exit_code = EXIT_NUMERIC


class DivergenceError(NumericalError):
    def __init__(self, message: str, last_good_time: Optional[float] = None):
        super().__init__(message)
        self.last_good_time = last_good_time


class LyapunovError(NumericalError):
    pass


class CareError(NumericalError):
    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        super().__init__(message)
        self.residuals = residuals or []


class RankDeficiencyError(NumericalError):
    def __init__(self, message: str, rank: int, columns: int):
        super().__init__(message)
        self.rank = rank
        self.columns = columns


class SteadyStateError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class ControllerFault(NumericalError):
    """Non-finite value inside the control law."""
