"""
Survival EE Exceptions

Error hierarchy shared by loading, design construction, solving and inference
"""

from typing import List, Optional, Sequence


class SurvivalEEError(Exception):
    """Base class for every error raised by the engine"""
    pass


class SchemaError(SurvivalEEError):
    """Raised when an input file does not carry the mapped columns"""
    pass


class DataValidationError(SurvivalEEError):
    """Raised when a record violates the dataset contract"""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class DesignError(SurvivalEEError):
    """Raised when a time or covariate design cannot be built"""
    pass


class NumericalDerivativeError(SurvivalEEError):
    """Raised when a finite-difference evaluation is not finite"""

    def __init__(self, message: str, coordinate: int):
        super().__init__(message)
        self.coordinate = coordinate


class SolverError(SurvivalEEError):
    """Raised when the root-finder fails; carries the diagnostics"""

    def __init__(self, message: str, diagnostics=None, parameters: Sequence[str] = ()):
        if parameters:
            message = f"{message} (suspect parameters: {', '.join(parameters)})"
        super().__init__(message)
        self.diagnostics = diagnostics
        self.parameters = list(parameters)


class InferenceError(SurvivalEEError):
    """Raised when the sandwich cannot be formed"""

    def __init__(self, message: str, directions: Optional[List[str]] = None):
        super().__init__(message)
        self.directions = directions or []


class LongFitError(SurvivalEEError):
    """Raised when the long-data logistic fit fails"""
    pass


class BootstrapError(SurvivalEEError):
    """Raised when too many bootstrap replicates fail"""

    def __init__(self, message: str, failures: int = 0):
        super().__init__(message)
        self.failures = failures


class GComputationError(SurvivalEEError):
    """Raised when the g-computation pipeline cannot proceed"""
    pass
