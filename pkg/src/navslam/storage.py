"""Versioned binary container with checksum, plus atomic file writes.

The container maps entry names to payloads of three kinds: raw bytes, numpy
arrays (dtype/shape preserved), or JSON-serializable objects.  All writes go
through a temp-file-then-rename so interrupted runs never leave a corrupt
file behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"NVC1"
CONTAINER_VERSION = 1

_KIND_BYTES = 0
_KIND_ARRAY = 1
_KIND_JSON = 2


class ContainerError(ValueError):
    """Container is malformed, has a bad checksum, or an unsupported version."""


def _encode_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.str.encode("ascii")
    head = struct.pack("<B", len(dtype)) + dtype + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}q", *arr.shape)
    return head + arr.tobytes()


def _decode_array(payload: bytes) -> np.ndarray:
    dlen = payload[0]
    dtype = np.dtype(payload[1 : 1 + dlen].decode("ascii"))
    off = 1 + dlen
    ndim = payload[off]
    off += 1
    shape = struct.unpack_from(f"<{ndim}q", payload, off)
    off += 8 * ndim
    return np.frombuffer(payload[off:], dtype=dtype).reshape(shape).copy()


def pack_container(entries: dict) -> bytes:
    """Serialize name -> (bytes | ndarray | JSON-able) in insertion order."""
    body = bytearray()
    for name, value in entries.items():
        if isinstance(value, (bytes, bytearray)):
            kind, payload = _KIND_BYTES, bytes(value)
        elif isinstance(value, np.ndarray):
            kind, payload = _KIND_ARRAY, _encode_array(value)
        else:
            kind = _KIND_JSON
            payload = json.dumps(value, sort_keys=True).encode("utf-8")
        name_b = name.encode("utf-8")
        body += struct.pack("<H", len(name_b)) + name_b
        body += struct.pack("<BQ", kind, len(payload)) + payload
    header = MAGIC + struct.pack("<HHI", CONTAINER_VERSION, len(entries), zlib.crc32(bytes(body)))
    return header + bytes(body)


def unpack_container(blob: bytes) -> dict:
    if blob[:4] != MAGIC:
        raise ContainerError("not a container file (bad magic)")
    version, n_entries, crc = struct.unpack_from("<HHI", blob, 4)
    if version != CONTAINER_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    body = blob[12:]
    if zlib.crc32(body) != crc:
        raise ContainerError("container checksum mismatch")
    entries: dict = {}
    off = 0
    for _ in range(n_entries):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off : off + nlen].decode("utf-8")
        off += nlen
        kind, plen = struct.unpack_from("<BQ", body, off)
        off += 9
        payload = body[off : off + plen]
        off += plen
        if kind == _KIND_BYTES:
            entries[name] = bytes(payload)
        elif kind == _KIND_ARRAY:
            entries[name] = _decode_array(bytes(payload))
        elif kind == _KIND_JSON:
            entries[name] = json.loads(payload.decode("utf-8"))
        else:
            raise ContainerError(f"unknown entry kind {kind} for {name!r}")
    return entries


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_container(path: str | Path, entries: dict) -> None:
    atomic_write_bytes(path, pack_container(entries))


def load_container(path: str | Path) -> dict:
    return unpack_container(Path(path).read_bytes())
