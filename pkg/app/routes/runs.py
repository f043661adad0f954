from fastapi import APIRouter, Depends, status
from sqlalchemy.orm import Session
from typing import List, Optional

from app.database.connection import get_db
from app.schemas import RunCreate, RunDisplay, RunWithRows
from app.services import create_run_record, get_run_by_id, get_runs, run

router = APIRouter(tags=["Runs"], prefix="/api/runs")

@router.post("", response_model=RunWithRows, status_code=status.HTTP_201_CREATED)
def create_run_endpoint(
    config: RunCreate,
    db: Session = Depends(get_db)
):
    """
    Execute a scenario run, write its reports and record it in the ledger
    """
    outcome = run(config)
    return create_run_record(db, outcome)

@router.get("", response_model=List[RunDisplay])
def read_runs(
    skip: int = 0,
    limit: int = 100,
    scenario: Optional[str] = None,
    db: Session = Depends(get_db)
):
    """
    Get a list of recorded runs
    """
    return get_runs(db, skip=skip, limit=limit, scenario=scenario)

@router.get("/{run_id}", response_model=RunWithRows)
def read_run(
    run_id: int,
    db: Session = Depends(get_db)
):
    """
    Get a recorded run with its decay rows
    """
    return get_run_by_id(db, run_id)
