from fastapi import status
from typing import Any, Optional


class LabError(Exception):
    """
    Base class for every error raised by the laboratory services
    """
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvalidRegionError(LabError):
    pass


class DomainError(LabError):
    pass


class FamilySyntaxError(LabError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class HolomorphyGuardError(FamilySyntaxError):
    def __init__(self, variable: str, line: int, column: int):
        super().__init__(f"abs() may not enclose the holomorphic variable '{variable}'", line, column)
        self.variable = variable


class DegenerateTransversalError(LabError):
    pass


class SupportError(LabError):
    pass


class ResourceError(LabError):
    pass


class PositivityError(LabError):
    pass


class ZeroCurrentError(LabError):
    pass


class ProductInvariantError(LabError):
    def __init__(self, prop: str, detail: str):
        super().__init__(f"product family violates property ({prop}): {detail}")
        self.prop = prop


class LipschitzViolation(LabError):
    def __init__(self, detail: str, witness: Optional[dict] = None):
        super().__init__(detail)
        self.witness = witness or {}


class ConfigError(LabError):
    def __init__(self, detail: str, location: Optional[Any] = None):
        if location is not None:
            detail = f"{detail} (at {location})"
        super().__init__(detail)
        self.location = location


class NotFoundError(LabError):
    status_code = status.HTTP_404_NOT_FOUND
