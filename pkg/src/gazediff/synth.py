"""Synthetic corpora.

Two generators back the self-contained experiments:

* dwell style: each synthetic stimulus has one Gaussian feature blob and
  its trajectories wander around the blob center (an AR(1) dwell whose
  marginal spread stays inside the blob), which is the training set for
  the conditioning experiment;
* freeview style: fixation dwells connected by saccades whose directions
  carry the horizontal bias of natural gaze, for exercising the
  statistics chain on gaze-shaped data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Trajectory, normalize_coords
from .features import synth_grid

# AR(1) pull toward the dwell center; the marginal std of the dwell is
# kept at 0.8 * sigma so nearly all samples fall inside the 2-sigma disk.
_DWELL_PULL = 0.15
_DWELL_SPREAD = 0.8


@dataclass
class SynthSpec:
    n_stimuli: int = 2
    per_stimulus: int = 64
    length: int = 64
    sigma: float = 0.15
    grid_hw: tuple = (8, 8)
    feat_depth: int = 8
    rate_hz: float = 240.0
    style: str = "dwell"
    seed: int = 0

    def __post_init__(self):
        self.grid_hw = tuple(int(v) for v in self.grid_hw)
        if self.style not in ("dwell", "freeview"):
            raise ValueError(f"unknown style {self.style!r}")
        if self.style == "dwell" and self.n_stimuli > self.feat_depth:
            raise ValueError(
                f"{self.n_stimuli} stimuli need {self.n_stimuli} orthogonal "
                f"signatures but feat_depth is {self.feat_depth}"
            )


def blob_centers(n):
    """Well-separated centers in model space: two on the horizontal axis,
    more on a circle."""
    if n == 1:
        return np.array([[0.0, 0.0]])
    if n == 2:
        return np.array([[-0.4, 0.0], [0.4, 0.0]])
    ang = 2 * np.pi * np.arange(n) / n
    return 0.5 * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def stimulus_ids(n):
    return [f"blob{i:02d}" for i in range(n)]


def make_grids(spec):
    """One feature grid per stimulus, orthogonal channel signatures."""
    centers = blob_centers(spec.n_stimuli)
    grids = []
    for i, sid in enumerate(stimulus_ids(spec.n_stimuli)):
        rel = (centers[i] + 1.0) / 2.0
        grids.append(
            synth_grid(
                [(rel[0], rel[1], spec.sigma / 2.0, i)],
                (*spec.grid_hw, spec.feat_depth),
                stimulus_id=sid,
            )
        )
    return grids


def dwell_trajectory(rng, center, sigma, length):
    """AR(1) wander around `center` in model space."""
    spread = _DWELL_SPREAD * sigma
    step = spread * np.sqrt(1.0 - (1.0 - _DWELL_PULL) ** 2)
    out = np.empty((length, 2), dtype=np.float64)
    x = center + spread * rng.standard_normal(2)
    for i in range(length):
        x = x + _DWELL_PULL * (center - x) + step * rng.standard_normal(2)
        out[i] = x
    return np.clip(out, -1.0, 1.0)


def freeview_trajectory(rng, length, frame=(224, 224), rate_hz=240.0, horizontal_bias=0.6):
    """Fixation dwells joined by saccades with horizontally biased
    directions, in pixel space of `frame`."""
    H, W = frame
    pos = np.array([rng.uniform(0.25 * W, 0.75 * W), rng.uniform(0.25 * H, 0.75 * H)])
    samples = []
    while len(samples) < length:
        dwell_n = int(rng.integers(int(0.12 * rate_hz), int(0.4 * rate_hz)))
        jitter = rng.normal(0.0, 1.5, size=(dwell_n, 2))
        samples.extend((pos + j).tolist() for j in jitter)
        if rng.random() < horizontal_bias:
            base = 0.0 if rng.random() < 0.5 else 180.0
            theta = np.radians(base + rng.normal(0.0, 6.0))
        else:
            theta = rng.uniform(-np.pi, np.pi)
        amp = rng.uniform(0.12, 0.45) * W
        nxt = pos + amp * np.array([np.cos(theta), np.sin(theta)])
        if not (0 <= nxt[0] <= W - 1 and 0 <= nxt[1] <= H - 1):
            nxt = pos - amp * np.array([np.cos(theta), np.sin(theta)])
        pos = np.clip(nxt, [0, 0], [W - 1, H - 1])
    return np.asarray(samples[:length], dtype=np.float64)


@dataclass
class SynthDataset:
    spec: SynthSpec
    grids: list
    trajectories: list          # of data.Trajectory
    centers: dict = field(default_factory=dict)

    def meta(self):
        return {
            "style": self.spec.style,
            "sigma": self.spec.sigma,
            "length": self.spec.length,
            "rate_hz": self.spec.rate_hz,
            "grid_hw": list(self.spec.grid_hw),
            "feat_depth": self.spec.feat_depth,
            "per_stimulus": self.spec.per_stimulus,
            "seed": self.spec.seed,
            "centers": {k: list(v) for k, v in self.centers.items()},
        }

    def save_meta(self, path):
        with open(path, "w") as fh:
            json.dump(self.meta(), fh, indent=1)


def make_dataset(spec):
    rng = np.random.default_rng(spec.seed)
    ids = stimulus_ids(spec.n_stimuli)
    centers = blob_centers(spec.n_stimuli)
    grids = make_grids(spec)
    trajectories = []
    for i, sid in enumerate(ids):
        for _ in range(spec.per_stimulus):
            if spec.style == "dwell":
                coords = dwell_trajectory(rng, centers[i], spec.sigma, spec.length)
            else:
                px = freeview_trajectory(rng, spec.length, rate_hz=spec.rate_hz)
                coords = normalize_coords(px)
            trajectories.append(Trajectory(coords=coords.astype(np.float32), stimulus_id=sid))
    return SynthDataset(
        spec=spec, grids=grids, trajectories=trajectories,
        centers={sid: centers[i] for i, sid in enumerate(ids)},
    )


def fraction_near(trajs, center, radius):
    """Fraction of all timesteps within `radius` of `center` (model space)."""
    pts = np.concatenate([np.asarray(t, dtype=np.float64).reshape(-1, 2) for t in trajs])
    d = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    return float((d <= radius).mean())
