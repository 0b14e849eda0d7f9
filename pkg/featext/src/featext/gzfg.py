"""Writer (and self-check reader) for the GZFG feature-grid format.

This mirrors the consumer's documented byte layout without sharing any
code with it: magic "GZFG", u32 version=1, u32 H, u32 W, u32 D, u8 dtype
tag (0 = float32), u16 stimulus-id length + UTF-8 bytes, then row-major
H*W*D little-endian values.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GZFG"
VERSION = 1
DTYPE_F32 = 0


def write_grid(path, values, stimulus_id):
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 3:
        raise ValueError(f"grid must be (H, W, D), got {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError(f"refusing to write non-finite features for {stimulus_id!r}")
    H, W, D = values.shape
    sid = stimulus_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIB", VERSION, H, W, D, DTYPE_F32))
        fh.write(struct.pack("<H", len(sid)))
        fh.write(sid)
        fh.write(values.tobytes())


def read_grid(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic")
        version, H, W, D, tag = struct.unpack("<IIIIB", fh.read(17))
        if version != VERSION or tag != DTYPE_F32:
            raise ValueError(f"{path}: unsupported version/dtype ({version}, {tag})")
        (nlen,) = struct.unpack("<H", fh.read(2))
        sid = fh.read(nlen).decode("utf-8")
        values = np.frombuffer(fh.read(H * W * D * 4), dtype="<f4").reshape(H, W, D)
    return values.copy(), sid
