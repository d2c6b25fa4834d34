#!/usr/bin/env python3
"""
Artifact cache
Content-hash keys and store/load/clear of serialized assets
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from typing import Optional, Dict, Any

from models import CachedArtifact, get_database_session

logger = logging.getLogger(__name__)


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def content_key(fields: Dict[str, Any], kind: str = "assets") -> str:
    """SHA-256 of the canonical JSON of `fields`, namespaced by kind"""
    return hashlib.sha256(f"{kind}:{canonical_json(fields)}".encode()).hexdigest()


def store_artifact(key: str, kind: str, payload: Dict[str, Any], name: Optional[str] = None):
    """Insert or replace a cached artifact"""
    db = get_database_session()
    try:
        text = json.dumps(payload, sort_keys=True)
        existing = db.query(CachedArtifact).filter(CachedArtifact.key == key).first()
        if existing:
            existing.payload = text
            existing.kind = kind
            existing.name = name
            existing.updated_at = datetime.now(timezone.utc)
        else:
            db.add(CachedArtifact(key=key, kind=kind, name=name, payload=text))
        db.commit()
        logger.info("cached %s artifact %s (%s)", kind, key[:12], name)
    except Exception as e:
        db.rollback()
        raise e
    finally:
        db.close()


def load_artifact(key: str) -> Optional[Dict[str, Any]]:
    """Payload of a cached artifact, or None on a miss"""
    db = get_database_session()
    try:
        row = db.query(CachedArtifact).filter(CachedArtifact.key == key).first()
        if not row:
            logger.info("cache miss %s", key[:12])
            return None
        logger.info("cache hit %s (%s)", key[:12], row.name)
        return json.loads(row.payload)
    finally:
        db.close()


def clear_artifacts(name: Optional[str] = None) -> int:
    """Delete cached artifacts (all, or those of one example); returns the count"""
    db = get_database_session()
    try:
        query = db.query(CachedArtifact)
        if name is not None:
            query = query.filter(CachedArtifact.name == name)
        count = query.delete()
        db.commit()
        return count
    except Exception as e:
        db.rollback()
        raise e
    finally:
        db.close()
