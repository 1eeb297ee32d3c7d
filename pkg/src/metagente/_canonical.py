"""Canonical JSON serialization and hashing shared across the package.

Fingerprints, config hashes, and provenance records all rely on the same
canonical form: sorted keys, compact separators, no ASCII escaping. Two
structurally equal objects always serialize to identical bytes.
"""

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_obj(obj: Any) -> str:
    """Hash of the canonical JSON form of ``obj``."""
    return sha256_hex(canonical_json(obj))
