"""Conditioning feature grids: binary format, resampling, synthesis.

A FeatureGrid is the per-stimulus H' x W' x D_feat array of patch
features the denoiser cross-attends to.  Grids are stored in a bit-exact
binary format (magic GZFG) so an external exporter can produce them
without sharing any code with this package.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"GZFG"
VERSION = 1
_DTYPE_F32 = 0

# Denominator guard for standardization; an all-zero grid stays zero.
_STD_EPS = 1e-8


class FeatureFormatError(ValueError):
    pass


class FeatureDataError(ValueError):
    pass


@dataclass
class FeatureGrid:
    values: np.ndarray      # (H', W', D_feat) float32
    stimulus_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise FeatureDataError(f"grid must be (H', W', D), got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise FeatureDataError(f"grid {self.stimulus_id!r} contains non-finite values")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def depth(self):
        return self.values.shape[2]


def standardize(grid):
    """Zero mean, unit variance across all cells and channels."""
    v = grid.values.astype(np.float64)
    v = (v - v.mean()) / (v.std() + _STD_EPS)
    return FeatureGrid(values=v.astype(np.float32), stimulus_id=grid.stimulus_id)


def save_grid(path, grid):
    v = np.ascontiguousarray(grid.values, dtype="<f4")
    H, W, D = v.shape
    sid = grid.stimulus_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIB", VERSION, H, W, D, _DTYPE_F32))
        fh.write(struct.pack("<H", len(sid)))
        fh.write(sid)
        fh.write(v.tobytes())


def load_grid(path, standardize_values=True):
    """Read a GZFG file; standardization is applied by default because the
    training pipeline expects unit-scale features."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FeatureFormatError(f"{path}: bad magic, not a feature grid file")
        version, H, W, D, dtype = struct.unpack("<IIIIB", fh.read(17))
        if version != VERSION:
            raise FeatureFormatError(f"{path}: unsupported version {version}")
        if dtype != _DTYPE_F32:
            raise FeatureFormatError(f"{path}: unknown dtype tag {dtype}")
        (nlen,) = struct.unpack("<H", fh.read(2))
        sid = fh.read(nlen).decode("utf-8")
        n = H * W * D
        buf = fh.read(n * 4)
        if len(buf) != n * 4:
            raise FeatureFormatError(f"{path}: truncated payload")
        values = np.frombuffer(buf, dtype="<f4").reshape(H, W, D).copy()
    grid = FeatureGrid(values=values, stimulus_id=sid)  # validates finiteness
    return standardize(grid) if standardize_values else grid


def _axis_positions(n_src, n_dst):
    if n_dst == 1:
        return np.array([(n_src - 1) / 2.0])
    return np.linspace(0.0, n_src - 1, n_dst)


def resample_grid(grid, target):
    """Corner-aligned bilinear resample of every channel to (H_t, W_t)."""
    Ht, Wt = target
    if Ht < 1 or Wt < 1:
        raise ValueError(f"target dims must be >= 1, got {target}")
    v = grid.values.astype(np.float64)
    out = resample_array(v, (Ht, Wt))
    return FeatureGrid(values=out.astype(np.float32), stimulus_id=grid.stimulus_id)


def resample_array(v, target):
    """Bilinear resample an (H, W, ...) array along its first two axes."""
    H, W = v.shape[:2]
    Ht, Wt = target
    ys = _axis_positions(H, Ht)
    xs = _axis_positions(W, Wt)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (ys - y0).reshape(-1, 1, *([1] * (v.ndim - 2)))
    wx = (xs - x0).reshape(1, -1, *([1] * (v.ndim - 2)))
    top = v[y0][:, x0] * (1 - wx) + v[y0][:, x1] * wx
    bot = v[y1][:, x0] * (1 - wx) + v[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def synth_grid(blobs, dims, stimulus_id="synthetic"):
    """Deterministic test grid: each blob writes an orthogonal one-hot
    channel signature scaled by a spatial Gaussian.

    `blobs` is a list of (cx, cy, sigma, channel) with centers and sigma
    in relative [0, 1] coordinates and `channel` selecting the signature
    axis.  Raises when a channel index exceeds the grid depth.
    """
    H, W, D = dims
    values = np.zeros((H, W, D), dtype=np.float64)
    ys = (np.arange(H) + 0.5) / H
    xs = (np.arange(W) + 0.5) / W
    for cx, cy, sigma, channel in blobs:
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise ValueError(f"blob center ({cx}, {cy}) outside [0, 1]^2")
        if channel >= D:
            raise ValueError(f"blob channel {channel} exceeds grid depth {D}")
        d2 = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2
        values[:, :, channel] += np.exp(-d2 / (2.0 * sigma**2))
    return FeatureGrid(values=values.astype(np.float32), stimulus_id=stimulus_id)


def zero_grid_like(grid):
    """The unconditional stand-in: same shape, all zeros."""
    return FeatureGrid(values=np.zeros_like(grid.values), stimulus_id="")
