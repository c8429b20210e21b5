"""On-disk cache of stage results keyed by a digest of the stage inputs."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Any, Mapping

from .digests import json_digest
from .images import atomic_write


def stage_key(stage: str, inputs: Mapping[str, Any], template_version: str, role: str) -> str:
    return json_digest({"stage": stage, "inputs": inputs, "template_version": template_version, "role": role})


class StageCache:
    """JSON values under ``<root>/<key[:2]>/<key>.json``; safe for concurrent use."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Any | None:
        path = self._path(key)
        try:
            value = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return value

    def put(self, key: str, value: Any) -> None:
        data = json.dumps(value, sort_keys=True, ensure_ascii=False).encode("utf-8")
        with self._lock:
            atomic_write(self._path(key), data)
