from __future__ import annotations
from typing import Any

__all__: tuple[str, ...] = (
    "StealthException",
    "ValidationError",
    "CaseFormatError",
    "InvalidCaseError",
    "NumericalError",
    "InfeasibleCovarianceError",
    "CorruptedCovarianceError",
    "AsymmetricMatrixError",
    "CaseFetchError",
)


class StealthException(Exception):
    pass


class ValidationError(StealthException, ValueError):
    """An argument violates a documented precondition."""


class CaseFormatError(ValidationError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class InvalidCaseError(ValidationError):
    """The case parsed but breaks a structural invariant."""


class NumericalError(StealthException):
    pass


class InfeasibleCovarianceError(NumericalError):
    def __init__(self, argument: str) -> None:
        self.argument = argument
        super().__init__(f"{argument} is not positive definite")


class CorruptedCovarianceError(NumericalError):
    def __init__(self, min_eigenvalue: float) -> None:
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"covariance has eigenvalue {min_eigenvalue:.3e} below tolerance")


class AsymmetricMatrixError(NumericalError):
    def __init__(self, deviation: float) -> None:
        self.deviation = deviation
        super().__init__(f"matrix is not symmetric (max deviation {deviation:.3e})")


class CaseFetchError(StealthException):
    def __init__(self, status: int, url: str, response: Any = None) -> None:
        self.status = status
        self.url = url
        self.response = response
        super().__init__(f"fetching {url} failed with status {status}")
