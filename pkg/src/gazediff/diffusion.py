"""Noise schedule, forward process, training objective and samplers.

The schedule follows the linear convention: betas rise linearly from
1e-4 to 2e-2 over T steps, alpha_bar is the running product of
(1 - beta).  Timesteps are 1-based: t ranges over [1, T], `alpha_bars[t-1]`
is the marginal coefficient, and t = 0 denotes the clean signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Adam, NumericError, Tape, Tensor, sub, tmean, mul


@dataclass
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @classmethod
    def linear(cls, t_diff=1000, beta_start=1e-4, beta_end=2e-2):
        betas = np.linspace(beta_start, beta_end, t_diff, dtype=np.float64)
        alphas = 1.0 - betas
        return cls(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))

    @property
    def t_diff(self):
        return len(self.betas)

    def check_t(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.t_diff):
            raise ValueError(f"diffusion step {t} outside [1, {self.t_diff}]")


@dataclass
class GuidanceConfig:
    scale: float = 4.0
    uncond_dropout: float = 0.10

    def __post_init__(self):
        if not (0.0 <= self.uncond_dropout <= 1.0):
            raise ValueError(f"uncond_dropout must be in [0, 1], got {self.uncond_dropout}")


def forward_noise(schedule, x0, t, eps):
    """Closed-form marginal: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.

    `t` may be a scalar or a per-sample vector for a batched x0.
    """
    schedule.check_t(t)
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    ab = schedule.alpha_bars[np.asarray(t) - 1]
    ab = np.reshape(ab, (-1,) + (1,) * (x0.ndim - 1)) if np.ndim(t) else ab
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def cfg_eps(model, rt, t, grid, scale):
    """Classifier-free guidance: (1 - c) * uncond + c * cond.

    The unconditional pass feeds the zero grid; with scale 1 this is the
    plain conditional prediction and the second pass is skipped.
    """
    cond = model.denoise(rt, t, grid)
    if scale == 1.0 or not model.config.conditioning:
        return cond
    uncond = model.denoise(rt, t, None)
    return (1.0 - scale) * uncond + scale * cond


class Trainer:
    """Owns the model parameters during optimization (single writer)."""

    def __init__(self, model, schedule, lr=1e-4, guidance=None, seed=0):
        self.model = model
        self.schedule = schedule
        self.guidance = guidance or GuidanceConfig()
        self.optimizer = Adam(model.param_list(), lr=lr)
        self.rng = np.random.default_rng(seed)
        self.steps_done = 0

    def step(self, x0, grids=None):
        """One denoising-objective step over a batch; returns the loss.

        Samples t uniformly in [1, T] and unit Gaussian noise, drops the
        condition to the zero grid for a `uncond_dropout` fraction of
        samples, minimizes the mean squared error between the injected
        and predicted noise with one Adam update.
        """
        x0 = np.asarray(x0, dtype=self.model.config.np_dtype)
        B = x0.shape[0]
        t = self.rng.integers(1, self.schedule.t_diff + 1, size=B)
        eps = self.rng.standard_normal(x0.shape).astype(x0.dtype)
        rt = forward_noise(self.schedule, x0, t, eps).astype(x0.dtype)
        if grids is None:
            batch_grids = None
        else:
            drop = self.rng.random(B) < self.guidance.uncond_dropout
            batch_grids = [None if drop[i] else grids[i] for i in range(B)]
        with Tape() as tape:
            pred = self.model.forward(rt, t, batch_grids)
            diff = sub(pred, Tensor(eps))
            loss = tmean(mul(diff, diff))
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite loss at step {self.steps_done} (t range {t.min()}..{t.max()})"
            )
        self.optimizer.step(tape.gradients(loss))
        self.steps_done += 1
        return value


def ddim_steps(t_diff, steps):
    """Evenly spaced descending step subsequence including the final
    training step; each entry pairs with its predecessor (0 = clean)."""
    if steps < 1 or steps > t_diff:
        raise ValueError(f"need 1 <= steps <= {t_diff}, got {steps}")
    ts = np.unique(np.rint(np.linspace(1, t_diff, steps)).astype(np.int64))[::-1]
    prev = np.append(ts[1:], 0)
    return list(zip(ts.tolist(), prev.tolist()))


def ddim_step(schedule, x, eps, t, t_prev):
    """Deterministic (eta = 0) update from step t to t_prev."""
    ab_t = schedule.alpha_bars[t - 1]
    ab_p = 1.0 if t_prev == 0 else schedule.alpha_bars[t_prev - 1]
    x0_hat = (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    return np.sqrt(ab_p) * x0_hat + np.sqrt(1.0 - ab_p) * eps


def ddpm_step(schedule, x, eps, t, noise):
    """One ancestral update; `noise` is ignored at t = 1 where the
    posterior variance vanishes."""
    b = schedule.betas[t - 1]
    a = schedule.alphas[t - 1]
    ab = schedule.alpha_bars[t - 1]
    mean = (x - b / np.sqrt(1.0 - ab) * eps) / np.sqrt(a)
    if t == 1:
        return mean
    ab_prev = schedule.alpha_bars[t - 2]
    var = (1.0 - ab_prev) / (1.0 - ab) * b
    return mean + np.sqrt(var) * noise


def sample_ddim(model, schedule, grid=None, steps=50, seed=0, n=1, cfg_scale=4.0):
    """Generate `n` trajectories with the deterministic sampler.

    Only the initial noise draw consumes randomness; the updates are
    deterministic, so fixed seed and weights reproduce bitwise-identical
    output.  Coordinates are clamped to the frame only at the end.
    """
    cfg = model.config
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, cfg.length, 2)).astype(cfg.np_dtype)
    for t, t_prev in ddim_steps(schedule.t_diff, steps):
        eps = cfg_eps(model, x, t, grid, cfg_scale)
        x = ddim_step(schedule, x, eps, t, t_prev).astype(cfg.np_dtype)
    return np.clip(x, -1.0, 1.0)


def sample_ddpm(model, schedule, grid=None, seed=0, n=1, cfg_scale=4.0):
    """Ancestral sampling over every schedule step."""
    cfg = model.config
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, cfg.length, 2)).astype(cfg.np_dtype)
    for t in range(schedule.t_diff, 0, -1):
        eps = cfg_eps(model, x, t, grid, cfg_scale)
        noise = rng.standard_normal(x.shape).astype(cfg.np_dtype)
        x = ddpm_step(schedule, x, eps, t, noise).astype(cfg.np_dtype)
    return np.clip(x, -1.0, 1.0)
