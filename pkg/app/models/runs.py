from sqlalchemy import Column, Integer, String, ForeignKey, Float, JSON, DateTime
from sqlalchemy.orm import relationship
from datetime import datetime

from app.database.connection import Base


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    scenario = Column(String, index=True, nullable=False)
    seed = Column(Integer, nullable=False)
    samples = Column(Integer, nullable=False)
    quad_order = Column(Integer, nullable=False)
    lambda_grid = Column(JSON, nullable=False)
    status = Column(Integer, nullable=False)
    failed_assertions = Column(JSON, default=list)
    csv_path = Column(String, nullable=True)
    json_path = Column(String, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    rows = relationship("DecayRow", back_populates="run", cascade="all, delete-orphan", order_by="DecayRow.lam")


class DecayRow(Base):
    __tablename__ = "decay_rows"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id", ondelete="CASCADE"), nullable=False)
    lam = Column(Float, nullable=False)
    mass_total = Column(Float, nullable=False)
    mass_near = Column(Float, nullable=False)
    mass_far = Column(Float, nullable=False)
    stderr = Column(Float, nullable=False)
    samples = Column(Integer, nullable=False)

    # Relationships
    run = relationship("RunRecord", back_populates="rows")
