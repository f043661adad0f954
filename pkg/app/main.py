from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
import os
import logging

from app.database.connection import engine
from app.models import Base
from app.routes import scenarios_router, runs_router, cohomology_router
from app.services import builtin_scenarios
from app.exceptions import LabError

# Set up logging
logging.basicConfig(level=os.getenv("LAB_LOG_LEVEL", "INFO").upper())
logger = logging.getLogger(__name__)

# Create ledger tables
def init_database():
    try:
        Base.metadata.create_all(bind=engine)
        logger.info("Run ledger tables ready")
    except Exception as e:
        logger.error(f"Error initializing database: {e}")
        raise

if __name__ == "__main__" or os.getenv("INIT_DB", "true").lower() == "true":
    init_database()

# Create FastAPI app
app = FastAPI(title="Foliated Cycle Lab")

@app.exception_handler(LabError)
async def lab_error_handler(request: Request, exc: LabError):
    return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

app.include_router(scenarios_router)
app.include_router(runs_router)
app.include_router(cohomology_router)

@app.get("/")
async def home():
    return {
        "service": app.title,
        "scenarios": [spec.name for spec in builtin_scenarios()],
    }

if __name__ == "__main__":
    import uvicorn
    uvicorn.run("app.main:app", host="0.0.0.0", port=8000, reload=True)
