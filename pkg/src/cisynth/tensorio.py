"""Versioned binary container for named tensors.

Used for mel dumps, token grids, embedding sets, and model checkpoints.
Layout (little endian throughout):

    magic   6 bytes  b"CTNS01"
    u32     header length
    bytes   header JSON (UTF-8): {"version": 1, ...caller metadata}
    u32     tensor count
    per tensor:
        u16     name length, then name (UTF-8)
        u8      dtype code
        u8      ndim
        u64[ndim] shape
        u64     payload byte count
        bytes   raw C-order little-endian data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CTNS01"
FORMAT_VERSION = 1

_DTYPE_CODES = {
    np.dtype("float32"): 1,
    np.dtype("float64"): 2,
    np.dtype("int64"): 3,
    np.dtype("int32"): 4,
    np.dtype("int16"): 5,
    np.dtype("uint8"): 6,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class TensorContainerError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {"version": FORMAT_VERSION}
    if meta:
        header.update(meta)
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise TensorContainerError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        nb = name.encode("utf-8")
        payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(struct.pack("<Q", len(payload)))
        parts.append(payload)
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:6] != MAGIC:
        raise TensorContainerError(f"{path}: not a tensor container (bad magic)")
    off = 6
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    meta = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    if meta.get("version") != FORMAT_VERSION:
        raise TensorContainerError(f"{path}: unsupported container version {meta.get('version')}")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        (nbytes,) = struct.unpack_from("<Q", data, off)
        off += 8
        if code not in _CODE_DTYPES:
            raise TensorContainerError(f"{path}: unknown dtype code {code} for {name!r}")
        dtype = _CODE_DTYPES[code]
        if off + nbytes > len(data):
            raise TensorContainerError(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(data[off : off + nbytes], dtype=dtype.newbyteorder("<"))
        off += nbytes
        tensors[name] = arr.astype(dtype).reshape(shape)
    return tensors, meta
