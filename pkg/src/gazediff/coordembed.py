"""Shared sinusoidal positional grid for trajectories and patch tokens.

One 2D grid over the stimulus resolution provides the positional code
for both modalities: trajectory tokens look their code up at the pixel
their (noisy) coordinate lands on, and patch tokens receive the same
grid bilinearly interpolated down to the patch resolution.  Sharing the
grid puts gaze positions and image patches in a single positional frame.

The grid concatenates a D/2 sinusoidal encoding of the row index with a
D/2 encoding of the column index; within each half the first half holds
the sine channels and the second the cosine channels, so the code at
pixel (0, 0) has all sine channels 0 and all cosine channels 1.
"""

from __future__ import annotations

import numpy as np

from .features import resample_array


def sinusoid_table(positions, dim):
    """(N,) integer positions -> (N, dim) [sin..., cos...] encoding."""
    if dim % 2:
        raise ValueError(f"encoding dim must be even, got {dim}")
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = positions[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def build_grid(height, width, dim, dtype=np.float32):
    """Positional grid (H, W, dim); depends only on its arguments."""
    if dim % 4:
        raise ValueError(f"grid dim must be divisible by 4, got {dim}")
    half = dim // 2
    ycode = sinusoid_table(np.arange(height), half)
    xcode = sinusoid_table(np.arange(width), half)
    grid = np.empty((height, width, dim), dtype=np.float64)
    grid[:, :, :half] = ycode[:, None, :]
    grid[:, :, half:] = xcode[None, :, :]
    return grid.astype(dtype)


def sine_channel_mask(dim):
    """Boolean mask of the sine channels of a `build_grid` embedding."""
    half = dim // 2
    quarter = half // 2
    mask = np.zeros(dim, dtype=bool)
    mask[:quarter] = True
    mask[half : half + quarter] = True
    return mask


def coords_to_pixels(coords, grid_hw):
    """Model-space coords (possibly outside [-1, 1] mid-diffusion) to
    nearest clamped pixel indices (iy, ix)."""
    H, W = grid_hw
    x = (np.asarray(coords[..., 0], dtype=np.float64) + 1.0) * (W - 1) / 2.0
    y = (np.asarray(coords[..., 1], dtype=np.float64) + 1.0) * (H - 1) / 2.0
    ix = np.clip(np.rint(x), 0, W - 1).astype(np.int64)
    iy = np.clip(np.rint(y), 0, H - 1).astype(np.int64)
    return iy, ix


def lookup(grid, coords):
    """Per-coordinate positional codes: (..., 2) coords -> (..., D)."""
    iy, ix = coords_to_pixels(coords, grid.shape[:2])
    return grid[iy, ix]


def for_patches(grid, patch_hw):
    """The same grid interpolated to the patch resolution (H', W', D)."""
    return resample_array(grid.astype(np.float64), patch_hw).astype(grid.dtype)
