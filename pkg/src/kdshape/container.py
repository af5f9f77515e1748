"""Self-describing little-endian binary container.

Layout::

    magic      4 bytes  (e.g. b"KDSB")
    version    uint32
    hdr_len    uint32
    header     hdr_len bytes of UTF-8 JSON; "arrays" lists (name, shape) in payload order
    payload    float64 little-endian arrays, back to back
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError

VERSION = 1
_PREFIX = struct.Struct("<4sII")


def encode(magic: bytes, header: dict, arrays: dict) -> bytes:
    header = dict(header)
    header["arrays"] = [[name, list(np.shape(a))] for name, a in arrays.items()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREFIX.pack(magic, VERSION, len(blob)), blob]
    for a in arrays.values():
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(data: bytes, magic: bytes):
    if len(data) < _PREFIX.size:
        raise FormatError("file too short for a container header")
    got, version, hdr_len = _PREFIX.unpack_from(data, 0)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    offset = start + hdr_len
    arrays = {}
    for name, shape in header.pop("arrays"):
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise FormatError(f"payload truncated in array {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError("trailing bytes after payload")
    return header, arrays


def write(path, blob: bytes) -> None:
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def digest(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()
