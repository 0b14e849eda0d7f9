import numpy as np
import pytest

from gazediff import diffusion
from gazediff.denoiser import DenoiserConfig, TrajectoryDenoiser
from gazediff.features import FeatureGrid


def small_model(**kw):
    cfg = DenoiserConfig(
        length=16,
        depth=1,
        channels=(16,),
        embed_dim=16,
        heads=4,
        time_dim=32,
        feat_depth=4,
        patch_hw=(4, 4),
        frame_hw=(32, 32),
        **kw,
    )
    return TrajectoryDenoiser(cfg, seed=0)


def small_grid(seed=0):
    rng = np.random.default_rng(seed)
    return FeatureGrid(rng.normal(size=(4, 4, 4)).astype(np.float32), f"g{seed}")


# ---------------------------------------------------------------------------
# Schedule


def test_linear_schedule_endpoints_and_monotonicity():
    s = diffusion.DiffusionSchedule.linear()
    assert s.t_diff == 1000
    assert s.betas[0] == pytest.approx(1e-4)
    assert s.betas[-1] == pytest.approx(2e-2)
    assert np.all(np.diff(s.betas) > 0)
    assert np.all(np.diff(s.alpha_bars) < 0)
    assert 0 < s.alpha_bars[-1] < s.alpha_bars[0] < 1


def test_alpha_bar_one_step_product():
    s = diffusion.DiffusionSchedule.linear()
    assert s.alpha_bars[0] == pytest.approx(0.9999, abs=1e-12)


def test_alpha_bar_matches_direct_product():
    s = diffusion.DiffusionSchedule.linear()
    direct = 1.0
    for t in range(s.t_diff):
        direct *= s.alphas[t]
        assert abs(direct - s.alpha_bars[t]) < 1e-12


# ---------------------------------------------------------------------------
# Forward process


def test_forward_noise_zero_eps():
    s = diffusion.DiffusionSchedule.linear()
    x0 = np.random.default_rng(0).uniform(-1, 1, (8, 2))
    rt = diffusion.forward_noise(s, x0, 10, np.zeros_like(x0))
    np.testing.assert_allclose(rt, np.sqrt(s.alpha_bars[9]) * x0, rtol=1e-12)


def test_forward_noise_low_t_close_to_signal():
    s = diffusion.DiffusionSchedule.linear()
    x0 = np.ones((4, 2))
    eps = np.random.default_rng(1).standard_normal((4, 2))
    rt = diffusion.forward_noise(s, x0, 1, eps)
    assert np.abs(rt - x0).max() < 0.05 + np.abs(eps).max() * 0.011


def test_forward_noise_t_out_of_range():
    s = diffusion.DiffusionSchedule.linear(t_diff=10)
    with pytest.raises(ValueError):
        diffusion.forward_noise(s, np.zeros((2, 2)), 11, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        diffusion.forward_noise(s, np.zeros((2, 2)), 0, np.zeros((2, 2)))


def test_forward_marginals_match_moments():
    s = diffusion.DiffusionSchedule.linear()
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, (16, 2))
    n = 10_000
    for t in (1, 500, 1000):
        eps = rng.standard_normal((n, *x0.shape))
        draws = diffusion.forward_noise(s, x0[None], t, eps)
        ab = s.alpha_bars[t - 1]
        target_mean = np.sqrt(ab) * x0
        scale = max(np.sqrt((target_mean**2).mean()), np.sqrt(1 - ab))
        mean_err = np.sqrt(((draws.mean(axis=0) - target_mean) ** 2).mean()) / scale
        var_err = abs(draws.var(axis=0).mean() - (1 - ab)) / (1 - ab)
        assert mean_err < 0.02, f"t={t}"
        assert var_err < 0.02, f"t={t}"


# ---------------------------------------------------------------------------
# Guidance


def test_cfg_collapses_at_unit_scale():
    model = small_model()
    rt = np.random.default_rng(3).normal(size=(1, 16, 2))
    g = small_grid()
    cond = model.denoise(rt, 5, g)
    np.testing.assert_array_equal(diffusion.cfg_eps(model, rt, 5, g, 1.0), cond)


def test_cfg_zero_scale_is_unconditional():
    model = small_model()
    rt = np.random.default_rng(4).normal(size=(1, 16, 2))
    uncond = model.denoise(rt, 5, None)
    np.testing.assert_allclose(diffusion.cfg_eps(model, rt, 5, small_grid(), 0.0), uncond, atol=1e-6)


def test_cfg_equal_passes_equal_output():
    model = small_model(conditioning=False)
    rt = np.random.default_rng(5).normal(size=(1, 16, 2))
    base = model.denoise(rt, 5, None)
    for c in (0.0, 1.0, 4.0):
        np.testing.assert_allclose(diffusion.cfg_eps(model, rt, 5, small_grid(), c), base, atol=1e-6)


def test_guidance_config_validation():
    with pytest.raises(ValueError):
        diffusion.GuidanceConfig(uncond_dropout=1.5)


# ---------------------------------------------------------------------------
# Training


def test_untrained_loss_near_unit_variance():
    model = small_model()
    s = diffusion.DiffusionSchedule.linear()
    trainer = diffusion.Trainer(model, s, lr=0.0, seed=0)
    rng = np.random.default_rng(6)
    losses = [
        trainer.step(rng.uniform(-1, 1, (16, 16, 2)).astype(np.float32), None) for _ in range(5)
    ]
    assert abs(np.mean(losses) - 1.0) < 0.1


def test_loss_nonnegative_and_seeded_repeatable():
    s = diffusion.DiffusionSchedule.linear(t_diff=50)
    x0 = np.random.default_rng(7).uniform(-1, 1, (4, 16, 2)).astype(np.float32)
    grids = [small_grid(i) for i in range(4)]
    losses = []
    for _ in range(2):
        trainer = diffusion.Trainer(small_model(), s, lr=1e-4, seed=123)
        losses.append([trainer.step(x0, grids) for _ in range(3)])
    assert losses[0] == losses[1]
    assert all(v >= 0 for v in losses[0])


def test_training_on_noise_reduces_loss():
    # Pure-noise data: the noised state still explains part of eps, so the
    # smoothed loss must fall monotonically over the first 200 steps.
    s = diffusion.DiffusionSchedule.linear(t_diff=100)
    model = small_model(conditioning=False)
    trainer = diffusion.Trainer(model, s, lr=2e-3, seed=1)
    rng = np.random.default_rng(8)
    losses = [trainer.step(rng.standard_normal((16, 16, 2)).astype(np.float32)) for _ in range(200)]
    windows = [np.mean(losses[i : i + 50]) for i in range(0, 200, 50)]
    assert all(b <= a + 0.01 for a, b in zip(windows, windows[1:]))
    assert windows[-1] < windows[0]


# ---------------------------------------------------------------------------
# Samplers


def test_ddim_steps_even_and_include_final():
    pairs = diffusion.ddim_steps(1000, 50)
    ts = [t for t, _ in pairs]
    assert ts[0] == 1000
    assert pairs[-1][1] == 0
    diffs = np.diff(ts)
    assert len(set(diffs.tolist())) <= 2  # rounding keeps spacing within one step
    full = diffusion.ddim_steps(10, 10)
    assert [t for t, _ in full] == list(range(10, 0, -1))


def test_ddim_bitwise_deterministic_and_seed_sensitive():
    model = small_model()
    s = diffusion.DiffusionSchedule.linear(t_diff=100)
    g = small_grid()
    a = diffusion.sample_ddim(model, s, g, steps=10, seed=5, n=2)
    b = diffusion.sample_ddim(model, s, g, steps=10, seed=5, n=2)
    c = diffusion.sample_ddim(model, s, g, steps=10, seed=6, n=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (2, 16, 2)
    assert np.isfinite(a).all() and np.abs(a).max() <= 1.0


def test_ddim_full_step_count_valid():
    model = small_model()
    s = diffusion.DiffusionSchedule.linear(t_diff=20)
    out = diffusion.sample_ddim(model, s, small_grid(), steps=20, seed=0, n=1)
    assert np.isfinite(out).all()


def test_ddpm_shape_and_seed_sensitivity():
    model = small_model()
    s = diffusion.DiffusionSchedule.linear(t_diff=25)
    a = diffusion.sample_ddpm(model, s, small_grid(), seed=1, n=1)
    b = diffusion.sample_ddpm(model, s, small_grid(), seed=2, n=1)
    assert a.shape == (1, 16, 2)
    assert np.isfinite(a).all()
    assert np.linalg.norm(a - b) > 0


def test_ddpm_oracle_step_inverts_forward_up_to_posterior_variance():
    # Reverse mean with the true injected noise lands on sqrt(ab_{t-1})*x0
    # plus a known eps coefficient: (1 - ab_{t-1}) = coeff^2 + posterior var.
    s = diffusion.DiffusionSchedule.linear()
    rng = np.random.default_rng(9)
    x0 = rng.uniform(-1, 1, (32, 2))
    for t in (2, 500, 1000):
        eps = rng.standard_normal(x0.shape)
        xt = diffusion.forward_noise(s, x0, t, eps)
        mean = diffusion.ddpm_step(s, xt, eps, t, np.zeros_like(x0))
        ab_prev = s.alpha_bars[t - 2]
        post_var = (1 - ab_prev) / (1 - s.alpha_bars[t - 1]) * s.betas[t - 1]
        coeff = np.sqrt(1.0 - ab_prev - post_var)
        np.testing.assert_allclose(mean, np.sqrt(ab_prev) * x0 + coeff * eps, atol=1e-10)


def test_ddim_deterministic_after_initial_draw():
    # Consuming extra RNG draws between steps must not change the result;
    # run the loop manually with a polluted generator.
    model = small_model()
    s = diffusion.DiffusionSchedule.linear(t_diff=50)
    g = small_grid()
    ref = diffusion.sample_ddim(model, s, g, steps=5, seed=3, n=1)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 16, 2)).astype(np.float32)
    for t, t_prev in diffusion.ddim_steps(50, 5):
        rng.standard_normal(100)  # unrelated draws
        eps = diffusion.cfg_eps(model, x, t, g, 4.0)
        x = diffusion.ddim_step(s, x, eps, t, t_prev).astype(np.float32)
    np.testing.assert_array_equal(np.clip(x, -1, 1), ref)
