"""From continuous trajectories to fixations, scanpaths, saliency maps
and saccade statistics.

Fixation identification is dispersion-based: a maximal run of samples
whose bounding-box dispersion (max - min per axis, summed) stays under
the threshold and that lasts at least the minimum duration collapses to
one fixation at its centroid.  Durations are counted as samples / rate
so that integer-factor upsampling leaves every event unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

# Defaults approximate one degree of visual angle on a 224-wide frame in
# a typical desktop recording geometry; both are plain configuration.
DISP_THRESH_PX = 25.0
MIN_FIX_DURATION_S = 0.100
SALIENCY_SIGMA_PX = 25.0

AMPLITUDE_BINS = 30
ANGLE_BIN_DEG = 10.0


@dataclass
class Fixation:
    x: float
    y: float
    onset: float
    duration: float


@dataclass
class Scanpath:
    fixations: list
    stimulus_id: str

    def __len__(self):
        return len(self.fixations)

    def points(self):
        return np.array([[f.x, f.y] for f in self.fixations], dtype=np.float64).reshape(-1, 2)


@dataclass
class SaliencyMap:
    values: np.ndarray  # (H, W), non-negative, sums to 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"saliency map must be 2D, got {self.values.shape}")
        if (self.values < 0).any():
            raise ValueError("saliency map contains negative mass")


def dispersion(window):
    """Summed per-axis extent of an (n, 2) window."""
    return float(np.ptp(window[:, 0]) + np.ptp(window[:, 1]))


def extract_fixations(
    traj,
    rate_hz,
    disp_thresh=DISP_THRESH_PX,
    min_fix_duration=MIN_FIX_DURATION_S,
):
    """Dispersion-threshold identification over a pixel-space trajectory.

    Returns fixations ordered by onset; saccade samples between windows
    are discarded.
    """
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[1] != 2 or len(traj) == 0:
        raise ValueError(f"need a nonempty (N, 2) trajectory, got {traj.shape}")
    if not np.isfinite(traj).all():
        raise ValueError("trajectory contains non-finite samples")
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    w_min = max(1, math.ceil(min_fix_duration * rate_hz))
    fixations = []
    i = 0
    n = len(traj)
    while i + w_min <= n:
        window = traj[i : i + w_min]
        if dispersion(window) <= disp_thresh:
            lo = window.min(axis=0)
            hi = window.max(axis=0)
            j = i + w_min
            while j < n:
                nlo = np.minimum(lo, traj[j])
                nhi = np.maximum(hi, traj[j])
                if (nhi - nlo).sum() > disp_thresh:
                    break
                lo, hi = nlo, nhi
                j += 1
            span = traj[i:j]
            fixations.append(
                Fixation(
                    x=float(span[:, 0].mean()),
                    y=float(span[:, 1].mean()),
                    onset=i / rate_hz,
                    duration=len(span) / rate_hz,
                )
            )
            i = j
        else:
            i += 1
    return fixations


def to_scanpath(traj, rate_hz, stimulus_id, **kw):
    return Scanpath(fixations=extract_fixations(traj, rate_hz, **kw), stimulus_id=stimulus_id)


# ---------------------------------------------------------------------------
# Saliency maps


def build_saliency(scanpaths, dims, sigma=SALIENCY_SIGMA_PX):
    """Aggregate fixation impulses across scanpaths, blur, normalize."""
    H, W = dims
    counts = np.zeros((H, W), dtype=np.float64)
    total = 0
    for sp in scanpaths:
        for f in sp.fixations:
            ix = int(np.clip(round(f.x), 0, W - 1))
            iy = int(np.clip(round(f.y), 0, H - 1))
            counts[iy, ix] += 1.0
            total += 1
    if total == 0:
        raise ValueError("cannot build a saliency map from zero fixations")
    blurred = gaussian_filter(counts, sigma=sigma, mode="constant")
    return SaliencyMap(values=blurred / blurred.sum())


def fixation_mask(scanpaths, dims):
    """Binary (H, W) mask of fixated pixels, for the location-based metrics."""
    H, W = dims
    mask = np.zeros((H, W), dtype=bool)
    for sp in scanpaths:
        for f in sp.fixations:
            ix = int(np.clip(round(f.x), 0, W - 1))
            iy = int(np.clip(round(f.y), 0, H - 1))
            mask[iy, ix] = True
    return mask


# ---------------------------------------------------------------------------
# Saccade statistics


def _wrap_deg(a):
    """Wrap angles to (-180, 180]."""
    a = (np.asarray(a, dtype=np.float64) + 180.0) % 360.0 - 180.0
    return np.where(a == -180.0, 180.0, a)


@dataclass
class SaccadeStats:
    amplitudes_px: np.ndarray
    directions_deg: np.ndarray
    inter_saccade_deg: np.ndarray


def scanpath_stats(scanpaths):
    """Saccade amplitude, direction and inter-saccade turning angle.

    Scanpaths shorter than two (three for the turning angle) fixations
    contribute nothing.
    """
    amps, dirs, turns = [], [], []
    for sp in scanpaths:
        pts = sp.points()
        if len(pts) < 2:
            continue
        vec = np.diff(pts, axis=0)
        amps.append(np.hypot(vec[:, 0], vec[:, 1]))
        theta = np.degrees(np.arctan2(vec[:, 1], vec[:, 0]))
        dirs.append(_wrap_deg(theta))
        if len(vec) >= 2:
            turns.append(_wrap_deg(np.diff(_wrap_deg(theta))))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
    return SaccadeStats(
        amplitudes_px=cat(amps), directions_deg=cat(dirs), inter_saccade_deg=cat(turns)
    )


def amplitude_histogram(stats, bins=AMPLITUDE_BINS):
    hi = stats.amplitudes_px.max() if len(stats.amplitudes_px) else 1.0
    counts, edges = np.histogram(stats.amplitudes_px, bins=bins, range=(0.0, max(hi, 1e-9)))
    return counts, edges


def angle_histogram(values):
    """36 bins of 10 degrees over (-180, 180]."""
    edges = np.arange(-180.0, 180.0 + ANGLE_BIN_DEG, ANGLE_BIN_DEG)
    shifted = np.where(values == 180.0, 179.999, values)  # np.histogram bins are right-open
    counts, _ = np.histogram(shifted, bins=edges)
    return counts, edges


def horizontal_bias_peaks(direction_counts):
    """(peak at 0 deg, peak at +-180 deg, mean bin count) of a 36-bin
    direction histogram; the peak is the taller of the two flanking bins."""
    counts = np.asarray(direction_counts, dtype=np.float64)
    mean = counts.mean()
    peak0 = max(counts[17], counts[18])     # [-10, 0) and [0, 10)
    peak180 = max(counts[0], counts[35])    # [-180, -170) and [170, 180]
    return peak0, peak180, mean


# ---------------------------------------------------------------------------
# File formats


def save_scanpaths(path, scanpaths):
    """Text lines `stimulus_id, idx, x, y, onset_s, duration_s`."""
    with open(path, "w") as fh:
        for sp in scanpaths:
            for i, f in enumerate(sp.fixations):
                fh.write(f"{sp.stimulus_id}, {i}, {f.x:.4f}, {f.y:.4f}, {f.onset:.5f}, {f.duration:.5f}\n")


def load_scanpaths(path):
    groups: dict = {}
    order = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sid, idx, x, y, onset, dur = [p.strip() for p in line.split(",")]
            if sid not in groups:
                groups[sid] = []
                order.append(sid)
            groups[sid].append((int(idx), float(x), float(y), float(onset), float(dur)))
    out = []
    for sid in order:
        # Rows stay in file order; idx 0 starts a new scanpath for the
        # same stimulus.
        current = []
        for idx, x, y, onset, dur in groups[sid]:
            if idx == 0 and current:
                out.append(Scanpath([Fixation(*r) for r in current], sid))
                current = []
            current.append((x, y, onset, dur))
        if current:
            out.append(Scanpath([Fixation(*r) for r in current], sid))
    return out


def save_saliency_pfm(path, sal):
    """Portable FloatMap: `Pf`, dims, negative scale (little-endian),
    then rows bottom-to-top."""
    H, W = sal.values.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{W} {H}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(sal.values[::-1].astype("<f4")).tobytes())


def load_saliency_pfm(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        W, H = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(W * H * 4), dtype="<f4" if scale < 0 else ">f4")
        values = data.reshape(H, W)[::-1].astype(np.float64)
    return SaliencyMap(values=values / values.sum())


def save_saliency_pgm(path, sal):
    """8-bit grayscale export for viewing."""
    v = sal.values
    peak = v.max()
    img = np.zeros_like(v, dtype=np.uint8) if peak <= 0 else np.rint(v / peak * 255).astype(np.uint8)
    H, W = v.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode())
        fh.write(img.tobytes())
