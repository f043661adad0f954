from pydantic import BaseModel, Field
from typing import List, Optional


# Decay curves
class DecayRow(BaseModel):
    lam: float
    mass_total: float = Field(ge=0)
    mass_near: float = Field(ge=0)
    mass_far: float = Field(ge=0)
    stderr: float = Field(ge=0)
    samples: int

    model_config = {"from_attributes": True}


class DecayReport(BaseModel):
    lambda_grid: List[float]
    rows: List[DecayRow]
    compact_radii: List[float]
    method: str
    rho: float
    seed: int

    def column(self, name: str) -> List[float]:
        return [getattr(row, name) for row in self.rows]


# Inequality constants
class InequalityFit(BaseModel):
    rho: float
    c1: float
    c2: float
    c3: float
    k: float
    bilipschitz_lower: Optional[float] = None
    bilipschitz_upper: Optional[float] = None
    alpha_max: float
    samples: int
    worst_slack: float
    refits: int = 0


class FarStratumCheck(BaseModel):
    samples: int
    max_mass: float
    nonzero: int
    witness_lambda: Optional[float] = None


# Lelong numbers and h-dimension
class LelongEstimate(BaseModel):
    radii: List[float]
    ratios: List[float]
    estimate: float
    model_error: Optional[float] = None
    warnings: List[str] = []


class HDimensionResult(BaseModel):
    masses: List[float]
    total: float
    h_dimension: int
    threshold: float
