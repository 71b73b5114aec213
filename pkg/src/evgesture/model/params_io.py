"""Self-describing parameter container.

Layout: 8-byte magic, little-endian u32 header length, UTF-8 JSON header,
then each tensor's raw little-endian bytes at the offset the header records
(relative to the start of the data block).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EVGPARAM"
VERSION = 1


class ContainerError(ValueError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


def dumps(tensors: dict[str, np.ndarray], config: dict | None = None, meta: dict | None = None) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr)
        dt = _le(a.dtype)
        raw = a.astype(dt, copy=False).tobytes()
        entries.append({"name": name, "dtype": dt.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {"version": VERSION, "config": config or {}, "meta": meta or {}, "tensors": entries}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(blobs)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Returns (tensors, config, meta)."""
    if data[:8] != MAGIC:
        raise ContainerError("not a parameter container")
    if len(data) < 12:
        raise ContainerError("truncated header")
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12 : 12 + hlen])
    except ValueError as exc:
        raise ContainerError("corrupt JSON header") from exc
    if header.get("version") != VERSION:
        raise ContainerError(f"unsupported container version {header.get('version')}")
    base = 12 + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(data):
            raise ContainerError(f"tensor {e['name']} runs past end of file")
        a = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)), offset=start)
        tensors[e["name"]] = a.reshape(e["shape"]).astype(a.dtype.newbyteorder("="))
    return tensors, header["config"], header["meta"]


def save(path, tensors, config=None, meta=None) -> None:
    Path(path).write_bytes(dumps(tensors, config, meta))


def load(path):
    return loads(Path(path).read_bytes())
