"""Batch export of patch features to GZFG files.

Variants:
    patch      16x16 grid at the backbone's native patch resolution
    upsampled  bilinear interpolation of the patch grid to 32x32
    global     the 1x1 global-token grid

Files are written atomically (temp + rename); a lock file in the output
directory records the backbone configuration and parameter fingerprint
so later exports can be checked for drift.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbone import GRID, build_backbone, fingerprint, preprocess_image
from .gzfg import write_grid

VARIANTS = ("patch", "upsampled", "global")
UPSAMPLED_HW = (32, 32)
LOCK_NAME = "featext.lock.json"


@dataclass
class ExportJob:
    images: list                 # (stimulus_id, path) pairs
    out_dir: Path
    variant: str = "upsampled"
    seed: int = 0
    dim: int = 128
    depth: int = 4
    heads: int = 4
    batch: int = 8
    state_dict: str = ""

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class ExportResult:
    written: list = field(default_factory=list)
    failed: list = field(default_factory=list)


def upsample_grid(values, target_hw):
    """Corner-aligned bilinear upsampling of an (H, W, D) grid."""
    t = torch.from_numpy(np.ascontiguousarray(values)).permute(2, 0, 1)[None]
    out = torch.nn.functional.interpolate(
        t, size=target_hw, mode="bilinear", align_corners=True
    )
    return out[0].permute(1, 2, 0).numpy()


def _atomic_write(path, values, stimulus_id):
    tmp = path.with_name(path.name + ".tmp")
    write_grid(tmp, values, stimulus_id)
    os.replace(tmp, path)


def export(job):
    """Run one export job; unreadable images are reported and skipped."""
    model = build_backbone(
        seed=job.seed, dim=job.dim, depth=job.depth, heads=job.heads,
        state_dict_path=job.state_dict or None,
    )
    job.out_dir.mkdir(parents=True, exist_ok=True)
    with open(job.out_dir / LOCK_NAME, "w") as fh:
        json.dump(
            {
                "backbone": "seeded-vit" if not job.state_dict else str(job.state_dict),
                "patch": 14,
                "grid": GRID,
                "dim": job.dim,
                "depth": job.depth,
                "heads": job.heads,
                "seed": job.seed,
                "variant": job.variant,
                "param_sha256": fingerprint(model),
            },
            fh,
            indent=1,
        )
    result = ExportResult()
    pending = []
    for sid, path in job.images:
        try:
            tensor = preprocess_image(Image.open(path))
        except (OSError, ValueError) as e:
            result.failed.append((sid, f"{path}: {e}"))
            continue
        pending.append((sid, tensor))
    with torch.no_grad():
        for i in range(0, len(pending), job.batch):
            chunk = pending[i : i + job.batch]
            batch = torch.stack([t for _, t in chunk])
            patches, global_tok = model(batch)
            for j, (sid, _) in enumerate(chunk):
                if job.variant == "patch":
                    values = patches[j].numpy()
                elif job.variant == "upsampled":
                    values = upsample_grid(patches[j].numpy(), UPSAMPLED_HW)
                else:
                    values = global_tok[j].numpy().reshape(1, 1, -1)
                out_path = job.out_dir / f"{sid}.gzfg"
                _atomic_write(out_path, values, sid)
                result.written.append(str(out_path))
    return result


def adjacency_cosine(values):
    """(mean adjacent-cell cosine, mean random-pair cosine) for one grid."""
    H, W, D = values.shape
    flat = values.reshape(-1, D)
    norm = flat / (np.linalg.norm(flat, axis=1, keepdims=True) + 1e-12)
    grid = norm.reshape(H, W, D)
    adjacent = []
    adjacent.append((grid[:, :-1] * grid[:, 1:]).sum(-1).ravel())
    adjacent.append((grid[:-1, :] * grid[1:, :]).sum(-1).ravel())
    adjacent = np.concatenate(adjacent)
    rng = np.random.default_rng(0)
    i = rng.integers(0, H * W, size=2000)
    j = rng.integers(0, H * W, size=2000)
    keep = i != j
    random_pairs = (norm[i[keep]] * norm[j[keep]]).sum(-1)
    return float(adjacent.mean()), float(random_pairs.mean())
