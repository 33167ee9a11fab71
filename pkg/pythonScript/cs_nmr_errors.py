"""
Error types shared by the CS-NMR reconstruction modules
"""

from typing import Optional


class CSNMRError(Exception):
    """Base class for every error raised by the reconstruction toolkit"""


class InvalidArgumentError(CSNMRError, ValueError):
    """An argument violates an operation's precondition"""


class DegenerateInputError(CSNMRError):
    """Input is well-formed but numerically degenerate (zero norm, empty spectrum)"""


class FidelityRangeError(DegenerateInputError):
    """Fidelity fell outside [0, 1] by more than round-off"""

    def __init__(self, value: float):
        super().__init__(f"fidelity {value!r} outside [0, 1]")
        self.value = value


class RankDeficiencyError(CSNMRError):
    """The observables of a readout scheme do not span the operator space"""

    def __init__(self, missing_dimension: int, message: Optional[str] = None):
        if message is None:
            message = f"readout scheme is incomplete: {missing_dimension} dimension(s) unobserved"
        super().__init__(message)
        self.missing_dimension = missing_dimension
