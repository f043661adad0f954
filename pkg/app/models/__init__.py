from app.database.connection import Base
from app.models.runs import RunRecord, DecayRow
