from contextlib import contextmanager
from functools import lru_cache
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, declarative_base

# Set up SQLAlchemy Base; engines are built per URL on first use
Base = declarative_base()


@lru_cache(maxsize=None)
def get_engine(database_url: str):
  engine = create_engine(database_url)
  # Import models so their tables are registered on Base before create_all
  from mixlab.models import models  # noqa: F401
  Base.metadata.create_all(bind=engine)
  return engine


@contextmanager
def get_db(database_url: str):
  """
  Yields a database session and ensures it is closed after use.
  """
  SessionLocal = sessionmaker(bind=get_engine(database_url), autocommit=False, autoflush=False)
  db = SessionLocal()
  try:
    yield db
  finally:
    db.close()
