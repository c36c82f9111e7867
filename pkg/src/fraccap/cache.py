"""Result cache keyed by a hash of the full problem description.

Entries live in memory and, when a directory is configured, as JSON files
written under a file lock. Floats round-trip exactly (17 significant digits).
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

from filelock import FileLock

from . import jsonio

VERSION = "1"


def cache_key(obj) -> str:
    text = jsonio.dumps({"v": VERSION, "key": obj}, indent=None)
    return hashlib.sha256(text.encode()).hexdigest()


class ResultCache:
    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get("FRACCAP_CACHE") or None
        self.dir = Path(directory) if directory else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.mem = {}
        self.hits = 0
        self.misses = 0

    def _path(self, h):
        return self.dir / h[:2] / f"{h}.json"

    def get(self, key):
        h = cache_key(key)
        if h in self.mem:
            self.hits += 1
            return self.mem[h]
        if self.dir is not None:
            path = self._path(h)
            if path.exists():
                with FileLock(str(path) + ".lock"):
                    value = jsonio.load(path)
                self.mem[h] = value
                self.hits += 1
                return value
        self.misses += 1
        return None

    def put(self, key, value):
        h = cache_key(key)
        # normalise through the JSON encoding so cold and warm values agree exactly
        value = jsonio.loads(jsonio.dumps(value, indent=None))
        self.mem[h] = value
        if self.dir is not None:
            path = self._path(h)
            path.parent.mkdir(parents=True, exist_ok=True)
            with FileLock(str(path) + ".lock"):
                tmp = path.with_suffix(".tmp")
                tmp.write_text(jsonio.dumps(value, indent=None))
                tmp.replace(path)
        return value
