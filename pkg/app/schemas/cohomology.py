from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Literal, Optional, Tuple

import numpy as np

# complex numbers travel as (re, im)
ComplexPair = Tuple[float, float]


def to_pairs(values) -> List[ComplexPair]:
    return [(float(np.real(v)), float(np.imag(v))) for v in np.ravel(values)]


# Projective space
class PnClass(BaseModel):
    n: int = Field(ge=1)
    p: int = Field(ge=0)
    c: float

    @model_validator(mode="before")
    @classmethod
    def truncate(cls, data):
        # omega^{n+1} = 0
        if isinstance(data, dict) and data.get("p", 0) > data.get("n", 0):
            data = {**data, "c": 0.0}
        return data

    @model_validator(mode="after")
    def check_degree(self):
        if self.p > 2 * self.n:
            raise ValueError(f"degree {self.p} exceeds any product of classes on P^{self.n}")
        return self

    @property
    def vanishes(self) -> bool:
        return self.c == 0.0 or self.p > self.n


class PnVerdictRequest(BaseModel):
    n: int = Field(ge=2)
    q: int = Field(ge=1)
    mass: float = Field(gt=0)


class PnVerdict(BaseModel):
    n: int
    q: int
    mass: float
    verdict: Literal["contradiction", "no-obstruction"]
    cycle_class: PnClass
    square: PnClass
    chain: List[str]


class KahlerVerdictRequest(BaseModel):
    n: int = Field(ge=2)
    q: int = Field(ge=1)
    h_pp: int = Field(ge=1)
    mass: float = Field(gt=0)


class KahlerVerdict(BaseModel):
    n: int
    q: int
    h_pp: int
    mass: float
    verdict: Literal["contradiction", "no-obstruction", "no-verdict"]
    chain: List[str]


class SurfaceLeafVerdict(BaseModel):
    h11: int
    compact_leaves: bool
    parabolic_leaf_possible: bool
    chain: List[str]


# Hirzebruch surfaces
class HirzebruchClass(BaseModel):
    n: int = Field(ge=0)
    a: float
    b: float


class HirzebruchCertificate(BaseModel):
    n: int
    a: float
    b: float
    square: float
    dot_f: float
    dot_c: float
    status: Literal["accepted", "rejected", "outside-hypothesis"]
    conclusion: str
    violated: List[str] = []


# Tori
class HermitianClass(BaseModel):
    matrix: List[List[ComplexPair]]

    @field_validator("matrix")
    @classmethod
    def check_hermitian(cls, value):
        n = len(value)
        if n == 0 or any(len(row) != n for row in value):
            raise ValueError("matrix must be square and non-empty")
        h = np.array([[complex(*entry) for entry in row] for row in value])
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("matrix is not Hermitian within 1e-12")
        return value

    @classmethod
    def from_array(cls, h) -> "HermitianClass":
        h = np.asarray(h, dtype=complex)
        return cls(matrix=[to_pairs(row) for row in h])

    @property
    def n(self) -> int:
        return len(self.matrix)

    def array(self) -> np.ndarray:
        return np.array([[complex(*entry) for entry in row] for row in self.matrix])

    @property
    def positive(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.array()) >= -1e-10))


class Rank1Result(BaseModel):
    success: bool
    gamma: Optional[List[ComplexPair]] = None
    eigenvalues: List[float]
    witness: Optional[float] = None
    reconstruction_error: Optional[float] = None


class TorusCertificate(BaseModel):
    n: int
    positive: bool
    minors_norm: float
    ext_square_norm: float
    criteria_agree: bool
    rank1: Optional[Rank1Result] = None
    leaf_direction: Optional[List[ComplexPair]] = None
    conclusion: str
