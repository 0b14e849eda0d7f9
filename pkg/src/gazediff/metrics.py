"""Sequence-similarity metrics and their best/mean aggregation.

All four metrics are distances (lower is better) over point sequences:
Levenshtein works on a spatial-cell symbol string, dynamic time warping
and the discrete Frechet distance on raw Euclidean costs, and the
time-delay-embedding distance on short sliding windows.  Aggregation
follows the best/mean protocol: per ground-truth sequence take the min
and mean over the generated set, average per image, then across images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

LEV_GRID_ROWS = 12
LEV_GRID_COLS = 16
TDE_K = 5
TDE_STRIDE = 1


def _as_points(seq):
    pts = np.asarray(seq, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"need an (N, 2) point sequence, got {pts.shape}")
    return pts


def cell_string(points, frame, grid=(LEV_GRID_ROWS, LEV_GRID_COLS)):
    """Map fixation points to symbols of a rows x cols partition."""
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dims must be >= 1, got {grid}")
    H, W = frame
    pts = _as_points(points) if len(points) else np.zeros((0, 2))
    cx = np.clip((pts[:, 0] / W * cols).astype(int), 0, cols - 1)
    cy = np.clip((pts[:, 1] / H * rows).astype(int), 0, rows - 1)
    return (cy * cols + cx).tolist()


def edit_distance(a, b):
    """Classic insertion/deletion/substitution DP over symbol lists."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return n + m
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[m]


def levenshtein(a, b, frame, grid=(LEV_GRID_ROWS, LEV_GRID_COLS)):
    """Edit distance between the spatial-cell strings of two scanpaths."""
    return edit_distance(cell_string(a, frame, grid), cell_string(b, frame, grid))


def dtw(a, b):
    """Sum of Euclidean costs along the optimal monotone alignment."""
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dtw needs nonempty sequences")
    cost = cdist(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = acc[i]
        above = acc[i - 1]
        for j in range(1, m + 1):
            row[j] = cost[i - 1, j - 1] + min(above[j], row[j - 1], above[j - 1])
    return float(acc[n, m])


def frechet(a, b):
    """Discrete Frechet distance: max-of-min coupling over Euclidean costs."""
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("frechet needs nonempty sequences")
    cost = cdist(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = acc[i]
        above = acc[i - 1]
        for j in range(1, m + 1):
            row[j] = max(cost[i - 1, j - 1], min(above[j], row[j - 1], above[j - 1]))
    return float(acc[n, m])


def _windows(pts, k, stride):
    starts = range(0, len(pts) - k + 1, stride)
    return np.stack([pts[s : s + k] for s in starts])


def tde(a, b, k=TDE_K, stride=TDE_STRIDE):
    """Directed time-delay-embedding distance from a into b.

    Every length-k window of `a` (step `stride`) is matched to its
    nearest length-k window of `b` under the mean pointwise Euclidean
    distance; the minima are averaged.
    """
    a, b = _as_points(a), _as_points(b)
    if len(a) < k or len(b) < k:
        raise ValueError(f"sequences must have at least k={k} points, got {len(a)} and {len(b)}")
    wa = _windows(a, k, stride)  # (na, k, 2)
    wb = _windows(b, k, 1)       # (nb, k, 2)
    diff = wa[:, None] - wb[None]                 # (na, nb, k, 2)
    d = np.sqrt((diff**2).sum(-1)).mean(-1)       # (na, nb)
    return float(d.min(axis=1).mean())


def tde_symmetric(a, b, k=TDE_K, stride=TDE_STRIDE):
    return 0.5 * (tde(a, b, k, stride) + tde(b, a, k, stride))


# ---------------------------------------------------------------------------
# Best/mean aggregation


@dataclass
class ImageScore:
    image: str
    metric: str
    best: float
    mean: float


@dataclass
class MetricReport:
    scores: list = field(default_factory=list)

    def add(self, image, metric, best, mean):
        self.scores.append(ImageScore(image=image, metric=metric, best=best, mean=mean))

    def overall(self):
        """Average best/mean per metric across images."""
        sums: dict = {}
        for s in self.scores:
            b, m, n = sums.get(s.metric, (0.0, 0.0, 0))
            sums[s.metric] = (b + s.best, m + s.mean, n + 1)
        return {k: {"best": b / n, "mean": m / n} for k, (b, m, n) in sums.items()}

    def to_csv(self, path, dataset=""):
        with open(path, "w") as fh:
            fh.write("dataset,image,metric,mean,best\n")
            for s in self.scores:
                fh.write(f"{dataset},{s.image},{s.metric},{s.mean:.6f},{s.best:.6f}\n")


def aggregate_image(gt_seqs, gen_seqs, metric):
    """(best, mean) for one image.

    For each ground truth: best is the min distance over the generated
    set, mean the average; both are then averaged over ground truths.
    """
    if not gt_seqs or not gen_seqs:
        raise ValueError("aggregation needs nonempty ground-truth and generated sets")
    bests, means = [], []
    for g in gt_seqs:
        d = [metric(g, s) for s in gen_seqs]
        bests.append(min(d))
        means.append(sum(d) / len(d))
    return sum(bests) / len(bests), sum(means) / len(means)


def aggregate(gt_by_image, gen_by_image, metric, name, report=None):
    """Run the per-image aggregation over a whole test set.

    `gt_by_image` / `gen_by_image` map image id -> list of sequences;
    returns (overall_best, overall_mean) and fills `report` when given.
    """
    report = report if report is not None else MetricReport()
    bests, means = [], []
    for image in sorted(gt_by_image):
        best, mean = aggregate_image(gt_by_image[image], gen_by_image[image], metric)
        report.add(image, name, best, mean)
        bests.append(best)
        means.append(mean)
    if not bests:
        raise ValueError("no images to aggregate")
    return sum(bests) / len(bests), sum(means) / len(means), report
