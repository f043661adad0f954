from pydantic import BaseModel, Field
from typing import List, Literal, Optional

from app.schemas.cohomology import ComplexPair

ExpectedBehavior = Literal["decay-quadratic", "decay-slow", "constant", "eventually-constant"]


class TransversalSpec(BaseModel):
    kind: Literal["disc", "box", "segment", "cantor", "points"]
    radius: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    points: Optional[List[ComplexPair]] = None


class MeasureSpec(BaseModel):
    kind: Literal["lebesgue", "atoms", "cantor"]
    # lebesgue: normalized on the transversal region
    points: Optional[List[ComplexPair]] = None
    weights: Optional[List[float]] = None
    depth: int = Field(default=12, ge=1, le=30)


class ScenarioSpec(BaseModel):
    name: str
    n: int
    q: int
    family: str
    transversal: TransversalSpec
    measure: MeasureSpec
    rho: float = Field(default=0.5, gt=0, le=0.5)
    lambda_grid: List[float]
    expected: ExpectedBehavior
    description: str = ""

    model_config = {"frozen": True}


class ScenarioSummary(BaseModel):
    name: str
    family: str
    measure: str
    expected: ExpectedBehavior


class AhlforsRow(BaseModel):
    r: float
    area: float
    length: float
    ratio: float
    closed_form: Optional[float] = None
