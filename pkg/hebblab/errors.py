# python imports
from typing import Iterable, Optional


class HBLError(Exception):
    """
    Base class for every error raised by hebblab.
    """


class ConfigurationError(HBLError, ValueError):
    """
    Raised for invalid parameters, dimension mismatches and unreadable files.
    """


class DomainError(HBLError, ValueError):
    """
    Raised when an argument lies outside the domain of an operation.
    """


class IntegrationBlowupError(HBLError, RuntimeError):
    """
    Raised when an integration produces a non-finite state.

    Attributes:
        t (float): The time at which the non-finite state was detected.
    """

    def __init__(self, t: float, message: Optional[str] = None):
        self.t = float(t)
        super().__init__(message or f"Non-finite state encountered at t={self.t:.6g}")


class NotAFixedPointError(HBLError, ValueError):
    """
    Raised when a location handed to the classifier is not an equilibrium.

    Attributes:
        residual (float): The infinity norm of the velocity at the location.
    """

    def __init__(self, residual: float, threshold: float):
        self.residual = float(residual)
        super().__init__(
            f"Residual {self.residual:.3e} exceeds fixed-point threshold {threshold:.1e}"
        )


class LabelingError(HBLError, RuntimeError):
    """
    Raised when memory labels cannot be assigned for some patterns.

    Attributes:
        patterns (list): Indices of the patterns whose Type-1 trial was unresolved.
    """

    def __init__(self, patterns: Iterable[int]):
        self.patterns = sorted(int(k) for k in patterns)
        super().__init__(f"Type-1 trial unresolved for patterns {self.patterns}")
