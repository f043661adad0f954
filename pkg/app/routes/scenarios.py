from fastapi import APIRouter, Query
from typing import List

from app.schemas import AhlforsRow, ScenarioSpec, ScenarioSummary
from app.services import ahlfors_ratios, get_scenario, scenario_summaries

router = APIRouter(tags=["Scenarios"], prefix="/api")

@router.get("/scenarios", response_model=List[ScenarioSummary])
def read_scenarios():
    """
    List the built-in scenarios
    """
    return scenario_summaries()

@router.get("/scenarios/{name}", response_model=ScenarioSpec)
def read_scenario(name: str):
    """
    Get one scenario with its family, measure and expected behaviour
    """
    return get_scenario(name)

@router.get("/ahlfors", response_model=List[AhlforsRow])
def read_ahlfors_ratios(
    v: List[float] = Query(..., description="re, im, re, im of the direction in C^2"),
    radii: List[float] = Query([1.0, 2.0, 5.0, 10.0]),
    order: int = Query(64, ge=4, le=256)
):
    """
    Ahlfors length/area ratios of the line zeta ↦ zeta v
    """
    if len(v) % 2:
        v = v + [0.0]
    direction = [complex(v[i], v[i + 1]) for i in range(0, len(v), 2)]
    return ahlfors_ratios(direction, radii, order=order)
