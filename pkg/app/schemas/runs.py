from pydantic import BaseModel, Field, field_validator
from typing import Any, Dict, List, Literal, Optional
from datetime import datetime

from app.schemas.cycle import DiagonalMassPoint
from app.schemas.density import DecayRow, FarStratumCheck, InequalityFit, LelongEstimate

MIN_SAMPLES = 256


# Run configuration
class RunConfig(BaseModel):
    scenario: str
    seed: int = 42
    samples: int = 65536
    quad_order: int = 16
    lambda_grid: Optional[List[float]] = None
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    workers: int = Field(default=1, ge=1)

    model_config = {"extra": "forbid", "strict": True}

    @field_validator("samples")
    @classmethod
    def check_samples(cls, value: int) -> int:
        if value < MIN_SAMPLES:
            raise ValueError("sample count below minimum")
        return value

    @field_validator("quad_order")
    @classmethod
    def check_order(cls, value: int) -> int:
        if value < 4:
            raise ValueError("quadrature order below minimum")
        return value

    @field_validator("lambda_grid")
    @classmethod
    def check_lambdas(cls, value):
        if value is not None and (not value or any(lam < 1 for lam in value)):
            raise ValueError("lambda grid must be non-empty with every lambda >= 1")
        return value


class RunCreate(RunConfig):
    pass


# Reports
class AssertionResult(BaseModel):
    name: str
    passed: bool
    detail: str


class RunReport(BaseModel):
    config: Dict[str, Any]
    scenario: Dict[str, Any]
    seed: int
    decay: List[DecayRow]
    compact_radii: List[float]
    method: str
    inequality_fit: Optional[InequalityFit] = None
    fit_error: Optional[str] = None
    derivative_bound: Optional[float] = None
    far_box_radii: Optional[List[float]] = None
    far_stratum: Optional[FarStratumCheck] = None
    lelong: Optional[LelongEstimate] = None
    diagonal_mass: List[DiagonalMassPoint] = []
    diagonal_oracle: Optional[List[float]] = None
    stokes_residual: float
    assertions: List[AssertionResult]
    exit_status: int


# Ledger
class DecayRowDisplay(DecayRow):
    id: int
    run_id: int

    model_config = {"from_attributes": True}


class RunDisplay(BaseModel):
    id: int
    scenario: str
    seed: int
    samples: int
    quad_order: int
    lambda_grid: List[float]
    status: int
    failed_assertions: List[str] = []
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    created_at: datetime

    model_config = {"from_attributes": True}


class RunWithRows(RunDisplay):
    rows: List[DecayRowDisplay] = []

    model_config = {"from_attributes": True}
