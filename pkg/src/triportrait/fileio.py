"""Small helpers shared by the binary and image writers."""

from __future__ import annotations

import os
from pathlib import Path

from .errors import FormatError


def atomic_write(path, payload: bytes) -> None:
    """Write bytes through a temporary sibling and rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def check_magic(data: bytes, magic: bytes, path) -> None:
    if len(data) < len(magic):
        raise FormatError("file too short for magic", len(data), str(path))
    if data[: len(magic)] != magic:
        raise FormatError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}", 0, str(path))
