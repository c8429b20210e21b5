"""Stable content digests used for image names, cache keys and fixtures."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(value: Any) -> str:
    # sorted keys and fixed separators; changing this changes every cache key
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def json_digest(value: Any) -> str:
    return sha256_bytes(canonical_json(value).encode("utf-8"))
