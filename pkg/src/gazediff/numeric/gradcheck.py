"""Central-difference verification of taped gradients."""

from __future__ import annotations

import numpy as np

from .tensor import NumericError, Tape


def _analytic(f, x):
    with Tape() as tape:
        loss = f(x)
    if not np.isfinite(loss.data).all():
        raise NumericError("forward value is not finite")
    grads = tape.gradients(loss)
    g = grads.get(x)
    if g is None:
        g = np.zeros_like(x.data)
    return float(loss.data), g


def grad_check(f, x, eps=1e-5):
    """Max relative error between taped and central-difference gradients.

    `f` maps a Tensor to a scalar Tensor; every coordinate of `x` is
    perturbed.  Relative error per coordinate is
    |analytic - numeric| / (|numeric| + 1e-8).
    """
    if x.dtype != np.float64:
        raise ValueError("grad_check requires a float64 tensor")
    _, analytic = _analytic(f, x)
    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x).item()
        flat[i] = keep - eps
        lo = f(x).item()
        flat[i] = keep
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError("forward value is not finite during perturbation")
        numeric = (hi - lo) / (2.0 * eps)
        err = abs(analytic.reshape(-1)[i] - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, err)
    return worst


def grad_check_params(f, params, eps=1e-4, coords_per_param=8, rng=None):
    """Sampled central-difference check across many parameter tensors.

    `f()` recomputes the scalar loss from the current parameter values
    (it must be deterministic: fix any noise draws outside).  For each
    parameter, up to `coords_per_param` coordinates are perturbed.
    Returns the max relative error over all sampled coordinates.
    """
    rng = rng or np.random.default_rng(0)

    def run():
        with Tape() as tape:
            loss = f()
        if not np.isfinite(loss.data).all():
            raise NumericError("forward value is not finite")
        return loss, tape

    loss, tape = run()
    grads = tape.gradients(loss)
    worst = 0.0
    for p in params:
        if p.dtype != np.float64:
            raise ValueError(f"grad_check_params requires float64 parameters ({p.name})")
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= coords_per_param else rng.choice(n, coords_per_param, replace=False)
        for i in picks:
            keep = flat[i]
            flat[i] = keep + eps
            hi = f().item()
            flat[i] = keep - eps
            lo = f().item()
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / (abs(numeric) + 1e-8)
            worst = max(worst, err)
    return worst
