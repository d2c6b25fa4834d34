#!/usr/bin/env python3
"""
Database models for the artifact cache
Built sets, certificates and terminal ingredients keyed by a content hash
"""

import os
from datetime import datetime, timezone
from typing import Optional
from sqlalchemy import create_engine, Column, String, DateTime, Text
from sqlalchemy.orm import declarative_base, sessionmaker

# Database setup
DATABASE_URL = os.getenv("PCLF_CACHE_URL", "sqlite:///./results/cache.db")

engine = None
SessionLocal = sessionmaker(autocommit=False, autoflush=False)
Base = declarative_base()


class CachedArtifact(Base):
    """One serialized asset bundle (JSON) per example and set-construction config"""
    __tablename__ = "cached_artifacts"

    key = Column(String(64), primary_key=True)
    kind = Column(String, nullable=False)
    name = Column(String, nullable=True)
    payload = Column(Text, nullable=False)
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
    updated_at = Column(DateTime, default=lambda: datetime.now(timezone.utc),
                        onupdate=lambda: datetime.now(timezone.utc))


def _ensure_sqlite_dir(url: str):
    if url.startswith("sqlite:///") and url != "sqlite:///:memory:":
        directory = os.path.dirname(url[len("sqlite:///"):])
        if directory:
            os.makedirs(directory, exist_ok=True)


def configure_database(url: Optional[str] = None):
    """Bind the session factory to `url` (default: PCLF_CACHE_URL or ./results/cache.db)"""
    global engine, DATABASE_URL
    DATABASE_URL = url or DATABASE_URL
    _ensure_sqlite_dir(DATABASE_URL)
    if engine is not None:
        engine.dispose()
    engine = create_engine(DATABASE_URL, echo=False)
    SessionLocal.configure(bind=engine)
    return engine


def get_database_session():
    """Get a database session"""
    if engine is None:
        configure_database()
    return SessionLocal()


def init_database(url: Optional[str] = None, quiet: bool = False):
    """Create the cache tables"""
    if url is not None or engine is None:
        configure_database(url)
    Base.metadata.create_all(bind=engine)
    if not quiet:
        print("✅ Cache tables initialized")


if __name__ == "__main__":
    init_database()
