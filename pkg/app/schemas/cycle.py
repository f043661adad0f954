from pydantic import BaseModel
from typing import List, Optional


class DiagonalMassPoint(BaseModel):
    eps: float
    value: float
    stderr: float
    samples: int
    exact: bool


class DiagonalMassCurve(BaseModel):
    points: List[DiagonalMassPoint]
    oracle: Optional[List[float]] = None


class FamilyCheck(BaseModel):
    bound: float
    holomorphy_residual: float
    centering_defect: float
    zero_plaque: float
    min_plaque_gap: Optional[float] = None
    failures: List[str] = []
    passed: bool
