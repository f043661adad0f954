from app.routes.scenarios import router as scenarios_router
from app.routes.runs import router as runs_router
from app.routes.cohomology import router as cohomology_router
