"""
Exception hierarchy for linearity-lab.

Every error carries a structured `ErrorDetail` body (serialized by the CLI to
the error stream) and the process exit code the CLI maps it to.
"""

from __future__ import annotations

from typing import Optional

from linearity_lab.models import ErrorDetail, ErrorResponse


class LabError(Exception):
    """Base error. Raise a subclass so callers can tell failure modes apart."""

    error_type = "lab_error"
    exit_code = 2

    def __init__(
        self,
        code: str,
        message: str,
        param: Optional[str] = None,
    ):
        self.detail = ErrorDetail(type=self.error_type, code=code, message=message, param=param)
        super().__init__(message)

    @property
    def body(self) -> ErrorResponse:
        return ErrorResponse(error=self.detail, exit_code=self.exit_code)


class StructuralError(LabError):
    """Dimension mismatches, bad factor subsets and non-partition groupings."""

    error_type = "structural_error"


class InvalidInputError(LabError):
    """Values that violate a type invariant (states, operators, configs)."""

    error_type = "invalid_input"


class IsometryError(InvalidInputError):
    pass


class MeasurementError(InvalidInputError):
    pass


class SteeringError(LabError):
    """A steering target that the purification cannot realize."""

    error_type = "steering_error"

    def __init__(
        self,
        code: str,
        message: str,
        trace_distance: Optional[float] = None,
        param: Optional[str] = None,
    ):
        self.trace_distance = trace_distance
        super().__init__(code, message, param)


class UnsupportedMapError(LabError):
    error_type = "unsupported_map"


class MapFaultError(LabError):
    """A dynamical map produced something that is not a density matrix."""

    error_type = "map_fault"
    exit_code = 3
