"""Raw eye-tracking ingestion, preprocessing and stimulus-level splits.

Recordings arrive as one CSV-like text file per file with a `t,x,y,valid`
header, sampled at a known rate (240 Hz for the source corpus this
pipeline targets).  Preprocessing drops blinks and invalid samples,
rejects recordings that end up shorter than the model length, brings the
rest to exactly `TRAJ_LEN` samples, and maps pixel coordinates of the
original stimulus frame into the normalized model space [-1, 1]^2 (via
the fixed 224x224 processing frame).
"""

from __future__ import annotations

import json

import struct
from dataclasses import dataclass, field

import numpy as np

TRAJ_LEN = 720
FRAME = (224, 224)  # (H, W) every stimulus is resized to

# Above this factor of TRAJ_LEN, resample instead of truncating.
_TRUNCATE_LIMIT = 1.05
# Samples this far outside the frame (fraction of the frame size) are
# treated as blink/loss artifacts and dropped; closer ones are clamped.
_BLINK_MARGIN = 0.05

STORE_MAGIC = b"GZTR"
STORE_VERSION = 1


class EmptyRecordingError(ValueError):
    """A recording contains no valid samples at all."""


class SplitError(ValueError):
    pass


class StoreError(ValueError):
    pass


@dataclass
class RawRecording:
    subject_id: str
    stimulus_id: str
    t: np.ndarray          # seconds, strictly increasing
    xy: np.ndarray         # (N, 2) pixels in the original stimulus frame
    valid: np.ndarray      # (N,) bool
    rate_hz: float

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if len(self.t) and np.any(np.diff(self.t) <= 0):
            raise ValueError(f"samples of {self.subject_id}/{self.stimulus_id} not strictly increasing in t")


@dataclass
class Trajectory:
    coords: np.ndarray     # (L, 2) float32 in [-1, 1]^2
    stimulus_id: str

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float32)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError(f"coords must be (L, 2), got {self.coords.shape}")
        if not np.isfinite(self.coords).all():
            raise ValueError("trajectory contains non-finite coordinates")

    @property
    def length(self):
        return self.coords.shape[0]


@dataclass
class DatasetSplit:
    train_stimuli: list
    test_stimuli: list
    seed: int

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(
                {"seed": self.seed, "train": sorted(self.train_stimuli), "test": sorted(self.test_stimuli)},
                fh,
                indent=1,
            )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(train_stimuli=d["train"], test_stimuli=d["test"], seed=d["seed"])


def read_recording(path, stimulus_id, subject_id="", rate_hz=240.0):
    """Parse a `t,x,y,valid` text file into a RawRecording."""
    t, x, y, valid = [], [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0].lower() == "t":
                continue  # header
            t.append(float(parts[0]))
            x.append(float(parts[1]))
            y.append(float(parts[2]))
            valid.append(parts[3] not in ("0", "false", "False"))
    return RawRecording(
        subject_id=subject_id or str(path),
        stimulus_id=stimulus_id,
        t=np.asarray(t, dtype=np.float64),
        xy=np.stack([np.asarray(x), np.asarray(y)], axis=1).astype(np.float64),
        valid=np.asarray(valid, dtype=bool),
        rate_hz=rate_hz,
    )


def normalize_coords(xy, frame=FRAME):
    """Pixel coords on [0, W-1] x [0, H-1] -> model space [-1, 1]^2."""
    H, W = frame
    out = np.empty_like(xy, dtype=np.float64)
    out[..., 0] = 2.0 * xy[..., 0] / (W - 1) - 1.0
    out[..., 1] = 2.0 * xy[..., 1] / (H - 1) - 1.0
    return out


def denormalize(coords, target=FRAME):
    """Model space [-1, 1]^2 -> pixel coords on the target frame.

    Inverse of `normalize_coords`: (-1,-1) -> (0,0) and (1,1) -> (W-1,H-1).
    """
    H, W = target
    coords = np.asarray(coords, dtype=np.float64)
    out = np.empty_like(coords)
    out[..., 0] = (coords[..., 0] + 1.0) * (W - 1) / 2.0
    out[..., 1] = (coords[..., 1] + 1.0) * (H - 1) / 2.0
    return out


def _resample_to(xy, n, keep="head"):
    """Bring a clean (N, 2) sequence to exactly n samples.

    Decimate when N is an integer multiple of n, truncate when N is
    within the truncation limit, otherwise linearly interpolate onto n
    equally spaced time points.  `keep` picks the truncation side; the
    source recordings do not say which end matters, so head is default.
    """
    N = len(xy)
    if N == n:
        return xy
    if N < n * _TRUNCATE_LIMIT:
        return xy[:n] if keep == "head" else xy[N - n :]
    if N % n == 0:
        return xy[:: N // n]
    pos = np.linspace(0.0, N - 1, n)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, N - 1)
    w = (pos - lo)[:, None]
    return xy[lo] * (1.0 - w) + xy[hi] * w


def preprocess(rec, stimulus_size, keep="head"):
    """RawRecording -> Trajectory in model space, or None when rejected.

    Drops invalid samples and out-of-frame excursions beyond the blink
    margin, rejects recordings with fewer than TRAJ_LEN remaining
    samples, and normalizes through the fixed processing frame.
    """
    if keep not in ("head", "tail"):
        raise ValueError(f"keep must be 'head' or 'tail', got {keep!r}")
    H, W = stimulus_size
    mask = rec.valid & np.isfinite(rec.xy).all(axis=1)
    mx, my = _BLINK_MARGIN * W, _BLINK_MARGIN * H
    mask &= (rec.xy[:, 0] >= -mx) & (rec.xy[:, 0] <= W - 1 + mx)
    mask &= (rec.xy[:, 1] >= -my) & (rec.xy[:, 1] <= H - 1 + my)
    if not mask.any():
        raise EmptyRecordingError(f"{rec.subject_id}/{rec.stimulus_id}: no valid samples")
    xy = rec.xy[mask]
    if len(xy) < TRAJ_LEN:
        return None
    xy = _resample_to(xy, TRAJ_LEN, keep=keep)
    # Clamp near-frame samples kept by the margin, then rescale to the
    # processing frame and normalize.
    xy = np.clip(xy, [0.0, 0.0], [W - 1.0, H - 1.0])
    fh, fw = FRAME
    scaled = np.empty_like(xy)
    scaled[:, 0] = xy[:, 0] * (fw - 1) / (W - 1)
    scaled[:, 1] = xy[:, 1] * (fh - 1) / (H - 1)
    return Trajectory(coords=normalize_coords(scaled, FRAME), stimulus_id=rec.stimulus_id)


def split(stimuli, seed, test_fraction=0.1):
    """Deterministic stimulus-level partition; recordings never straddle it."""
    stimuli = sorted(set(stimuli))
    if len(stimuli) < 2:
        raise SplitError(f"need at least 2 stimuli to split, got {len(stimuli)}")
    if not (0.0 < test_fraction < 1.0):
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(len(stimuli) * test_fraction))
    n_test = min(max(n_test, 1), len(stimuli) - 1)
    order = np.random.default_rng(seed).permutation(len(stimuli))
    test = [stimuli[i] for i in order[:n_test]]
    train = [stimuli[i] for i in order[n_test:]]
    return DatasetSplit(train_stimuli=train, test_stimuli=test, seed=seed)


# ---------------------------------------------------------------------------
# Trajectory store: binary container of (stimulus_id, L x 2 float32) records


def save_store(path, trajectories):
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<II", STORE_VERSION, len(trajectories)))
        for traj in trajectories:
            raw = traj.stimulus_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", traj.length))
            fh.write(traj.coords.astype("<f4").tobytes())


def load_store(path):
    with open(path, "rb") as fh:
        if fh.read(4) != STORE_MAGIC:
            raise StoreError(f"{path}: not a trajectory store")
        version, count = struct.unpack("<II", fh.read(8))
        if version != STORE_VERSION:
            raise StoreError(f"{path}: unsupported version {version}")
        out = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            sid = fh.read(nlen).decode("utf-8")
            (L,) = struct.unpack("<I", fh.read(4))
            buf = fh.read(L * 2 * 4)
            if len(buf) != L * 2 * 4:
                raise StoreError(f"{path}: truncated record for {sid!r}")
            coords = np.frombuffer(buf, dtype="<f4").reshape(L, 2)
            out.append(Trajectory(coords=coords.copy(), stimulus_id=sid))
        return out


# ---------------------------------------------------------------------------
# Dataset manifest


@dataclass
class ManifestEntry:
    stimulus_id: str
    size: tuple            # (H, W) of the original stimulus
    recordings: list = field(default_factory=list)
    image: str = ""


@dataclass
class Manifest:
    rate_hz: float
    entries: list

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(
                {
                    "rate_hz": self.rate_hz,
                    "stimuli": [
                        {
                            "id": e.stimulus_id,
                            "size": list(e.size),
                            "image": e.image,
                            "recordings": e.recordings,
                        }
                        for e in self.entries
                    ],
                },
                fh,
                indent=1,
            )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        entries = [
            ManifestEntry(
                stimulus_id=s["id"],
                size=tuple(s["size"]),
                recordings=list(s.get("recordings", [])),
                image=s.get("image", ""),
            )
            for s in d["stimuli"]
        ]
        return cls(rate_hz=float(d["rate_hz"]), entries=entries)
