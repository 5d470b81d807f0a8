"""Parameter checkpoint container.

Layout (little-endian)::

    b"ASTN1"                      5-byte magic
    uint64                        header length in bytes
    header                        UTF-8 JSON
    payload                       raw tensor buffers, back to back

The header is ``{"tensors": [{"name", "shape", "dtype", "offset", "nbytes"}],
"meta": {...}}`` with offsets relative to the start of the payload.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"ASTN1"
_DTYPES = {"<f4": np.float32, "<f8": np.float64, "<i8": np.int64, "|u1": np.uint8}


class CheckpointError(ValueError):
    pass


def save_tensors(path: str | os.PathLike, tensors: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> None:
    entries = []
    buffers = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        code = le.dtype.str
        if code not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code, "offset": offset, "nbytes": len(raw)})
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps({"tensors": entries, "meta": dict(meta or {})}, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in buffers:
            fh.write(raw)
    os.replace(tmp, path)


def load_tensors(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not an ASTN1 checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise CheckpointError(f"{path}: truncated before header length")
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    payload = memoryview(data)[pos + hlen :]
    out: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        start, nbytes = entry["offset"], entry["nbytes"]
        if nbytes != int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} size disagrees with its shape")
        if start + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated payload for tensor {entry['name']!r}")
        arr = np.frombuffer(payload[start : start + nbytes], dtype=np.dtype(dtype).newbyteorder("<"))
        out[entry["name"]] = arr.reshape(shape).astype(dtype)
    return out, header.get("meta", {})
