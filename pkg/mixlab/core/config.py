import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional
from dotenv import load_dotenv

from mixlab.core.exceptions import InvalidConfig

# Configuration & Setup for the application
load_dotenv()

# Numerical tolerances shared across services
SYMMETRY_TOL = 1e-12
PD_TOL = 1e-10
CONDITION_LIMIT = 1e12
COVARIANCE_DECIMALS = 12

DEFAULT_GATE_SIGMA = 4.0


@dataclass(frozen=True)
class Settings:
  threads: int
  log_level: str
  default_n: int
  default_replicates: int
  output_dir: str
  database_url: Optional[str]


def _int_env(name: str, default: int, minimum: int) -> int:
  raw = os.getenv(name)
  if raw is None or raw.strip() == "":
    return default
  try:
    value = int(raw)
  except ValueError:
    raise InvalidConfig(f"{name} must be an integer, got {raw!r}")
  if value < minimum:
    raise InvalidConfig(f"{name} must be >= {minimum}, got {value}")
  return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
  """
  Read MIXLAB_* environment variables (a .env file is honoured).
  Cached per process; call get_settings.cache_clear() after changing the environment.
  """
  log_level = os.getenv("MIXLAB_LOG_LEVEL", "INFO").upper()
  if log_level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
    raise InvalidConfig(f"MIXLAB_LOG_LEVEL is not a logging level: {log_level!r}")

  database_url = os.getenv("MIXLAB_DATABASE_URL") or None

  return Settings(
    threads=_int_env("MIXLAB_THREADS", min(os.cpu_count() or 1, 8), 1),
    log_level=log_level,
    default_n=_int_env("MIXLAB_DEFAULT_N", 1000, 4),
    default_replicates=_int_env("MIXLAB_DEFAULT_REPLICATES", 1000, 1),
    output_dir=os.getenv("MIXLAB_OUTPUT_DIR", "results"),
    database_url=database_url,
  )
