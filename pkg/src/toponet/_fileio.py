from __future__ import annotations

import os
import tempfile
from pathlib import Path


class atomic_open:
    """Write to a temp file in the target directory, then rename over the target."""

    def __init__(self, path, mode: str):
        self.path = Path(path)
        self.mode = mode

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self.tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.")
        kw = {"newline": ""} if "b" not in self.mode else {}
        self.f = os.fdopen(fd, self.mode, **kw)
        return self.f

    def __exit__(self, exc_type, exc, tb):
        self.f.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            os.unlink(self.tmp)
        return False
