"""Versioned binary container of named tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"GZCK"
    u32     format version (currently 1)
    u32     tensor count
    per tensor:
        u16     name length, then that many UTF-8 bytes
        u8      dtype tag (0 = float32, 1 = float64)
        u8      rank
        u32[r]  dims
        raw little-endian array data, row-major
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GZCK"
VERSION = 1

_TAG_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_TO_TAG = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors):
    """Write a {name: ndarray} mapping; iteration order is preserved."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_TO_TAG:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", _DTYPE_TO_TAG[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_tensors(path):
    """Read back a {name: ndarray} mapping in file order."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            tag, rank = struct.unpack("<BB", fh.read(2))
            if tag not in _TAG_TO_DTYPE:
                raise CheckpointError(f"{path}: unknown dtype tag {tag}")
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            dtype = _TAG_TO_DTYPE[tag]
            n = int(np.prod(dims)) if rank else 1
            buf = fh.read(n * dtype.itemsize)
            if len(buf) != n * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated data for {name!r}")
            out[name] = np.frombuffer(buf, dtype=dtype).reshape(dims).copy()
        return out
