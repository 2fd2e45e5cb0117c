"""FTAG time-tag files: one detector channel per file.

Layout (little endian)::

    b"FTAG"          magic, 4 bytes
    version          uint8 (currently 1)
    channel          uint8
    count            uint64
    timestamps       count x uint64, picoseconds, ascending
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .source import TimeTagStream

MAGIC = b"FTAG"
VERSION = 1
_HEADER = struct.Struct("<4sBBQ")


class FtagFormatError(ValueError):
    pass


def write_ftag(path, stream: TimeTagStream) -> Path:
    path = Path(path)
    tags = np.asarray(stream.tags, dtype=np.int64)
    if tags.size and tags[0] < 0:
        raise ValueError("FTAG timestamps must be non-negative")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, stream.channel, tags.size))
        fh.write(tags.astype("<u8").tobytes())
    return path


def read_ftag(path, duration: int | None = None) -> TimeTagStream:
    """Read one FTAG file.

    The format does not store the acquisition length; ``duration`` defaults
    to the last timestamp.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FtagFormatError(f"{path}: truncated header")
    magic, version, channel, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FtagFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FtagFormatError(f"{path}: unsupported FTAG version {version}")
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        raise FtagFormatError(f"{path}: expected {expected} bytes for {count} tags, found {len(data)}")
    raw = np.frombuffer(data, dtype="<u8", count=count, offset=_HEADER.size)
    if count and int(raw.max()) >= 2**63:
        raise FtagFormatError(f"{path}: timestamp beyond the signed 64-bit range")
    tags = raw.astype(np.int64)
    if duration is None:
        duration = int(tags[-1]) if count else 0
    return TimeTagStream(channel=channel, tags=tags, duration=int(duration))
