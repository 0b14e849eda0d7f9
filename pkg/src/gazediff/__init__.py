"""Diffusion over continuous gaze trajectories, conditioned on image
patch features, plus the downstream fixation / scanpath / saliency chain
and its evaluation harness."""

from .data import DatasetSplit, Manifest, RawRecording, Trajectory, preprocess, split
from .denoiser import DenoiserConfig, TrajectoryDenoiser
from .diffusion import (
    DiffusionSchedule,
    GuidanceConfig,
    Trainer,
    cfg_eps,
    forward_noise,
    sample_ddim,
    sample_ddpm,
)
from .events import Fixation, SaliencyMap, Scanpath, build_saliency, extract_fixations
from .features import FeatureGrid, load_grid, resample_grid, save_grid, synth_grid
from .metrics import MetricReport, aggregate, dtw, frechet, levenshtein, tde
from .salmetrics import SaliencyScores, saliency_metrics

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "DenoiserConfig",
    "DiffusionSchedule",
    "FeatureGrid",
    "Fixation",
    "GuidanceConfig",
    "Manifest",
    "MetricReport",
    "RawRecording",
    "SaliencyMap",
    "SaliencyScores",
    "Scanpath",
    "Trainer",
    "Trajectory",
    "TrajectoryDenoiser",
    "aggregate",
    "build_saliency",
    "cfg_eps",
    "dtw",
    "extract_fixations",
    "forward_noise",
    "frechet",
    "levenshtein",
    "load_grid",
    "preprocess",
    "resample_grid",
    "saliency_metrics",
    "sample_ddim",
    "sample_ddpm",
    "save_grid",
    "split",
    "synth_grid",
    "tde",
]
