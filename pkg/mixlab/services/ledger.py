import logging
from typing import List, Optional

from sqlalchemy.exc import SQLAlchemyError

from mixlab.core.config import get_settings
from mixlab.core.database import get_db
from mixlab.core.exceptions import InvalidConfig
from mixlab.models.models import RunRecord
from mixlab.schemas.schemas import RunRecordModel

logger = logging.getLogger(__name__)


def _url(database_url: Optional[str]) -> Optional[str]:
  return database_url or get_settings().database_url


def record_run(command: str, exit_code: int, config_path: Optional[str] = None,
               config_json: Optional[str] = None, output_dir: Optional[str] = None,
               message: Optional[str] = None, database_url: Optional[str] = None) -> Optional[RunRecordModel]:
  """
  Append one CLI invocation to the run ledger. Returns None when the ledger is disabled.
  A database failure is logged and never changes the command's outcome.
  """
  url = _url(database_url)
  if not url:
    logger.debug("run ledger disabled (MIXLAB_DATABASE_URL unset)")
    return None
  try:
    with get_db(url) as db:
      record = RunRecord(
        command=command,
        config_path=config_path,
        config_json=config_json,
        output_dir=output_dir,
        exit_code=exit_code,
        message=message,
      )
      db.add(record)
      db.commit()
      db.refresh(record)
      return RunRecordModel.model_validate(record)
  except SQLAlchemyError as e:
    logger.warning("could not record run in ledger: %s", e)
    return None


def list_runs(limit: int = 20, command: Optional[str] = None,
              database_url: Optional[str] = None) -> List[RunRecordModel]:
  """Most recent runs first, optionally filtered by command."""
  url = _url(database_url)
  if not url:
    raise InvalidConfig("run ledger is disabled; set MIXLAB_DATABASE_URL to use history")
  with get_db(url) as db:
    query = db.query(RunRecord)
    if command:
      query = query.filter(RunRecord.command == command)
    rows = query.order_by(RunRecord.id.desc()).limit(limit).all()
    return [RunRecordModel.model_validate(row) for row in rows]
