from sqlalchemy import Column, Integer, String, Text, DateTime
from mixlab.core.database import Base
from datetime import datetime, timezone

# --- SQLAlchemy Models (Database Table Definitions) ---

# RunRecord Model: one row per CLI invocation in the run ledger
class RunRecord(Base):
  __tablename__ = "run_records"
  id = Column(Integer, primary_key=True, autoincrement=True)
  command = Column(String, nullable=False)
  config_path = Column(String, nullable=True)
  config_json = Column(Text, nullable=True)
  output_dir = Column(String, nullable=True)
  exit_code = Column(Integer, nullable=False)
  message = Column(Text, nullable=True)
  created_date = Column(DateTime, default=lambda: datetime.now(timezone.utc), nullable=False)
