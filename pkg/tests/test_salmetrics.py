import numpy as np
import pytest

from gazediff import salmetrics
from gazediff.events import Fixation, Scanpath, build_saliency, fixation_mask


def gaussian_map(dims, cy, cx, sigma):
    H, W = dims
    ys, xs = np.mgrid[0:H, 0:W]
    v = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma**2))
    return v / v.sum()


def test_identical_distributions_perfect_scores():
    sal = gaussian_map((64, 64), 30, 30, 6.0)
    mask = np.zeros((64, 64), dtype=bool)
    mask[30, 30] = True
    scores = salmetrics.saliency_metrics(sal, sal, mask)
    assert scores.cc == pytest.approx(1.0, abs=1e-12)
    assert scores.sim == pytest.approx(1.0, abs=1e-12)
    assert scores.kl < 1e-6
    assert scores.degenerate == []


def test_uniform_prediction_degenerate_nss():
    pred = np.full((32, 32), 1.0 / 1024)
    gt = gaussian_map((32, 32), 16, 16, 4.0)
    mask = np.zeros((32, 32), dtype=bool)
    mask[16, 16] = True
    scores = salmetrics.saliency_metrics(pred, gt, mask)
    assert scores.nss == 0.0
    assert "NSS" in scores.degenerate


def test_perfect_predictor_auc_judd():
    pred = gaussian_map((64, 64), 20, 40, 3.0)
    mask = np.zeros((64, 64), dtype=bool)
    mask[20, 40] = True
    assert salmetrics.auc_judd(pred, mask) > 0.99
    assert salmetrics.auc_borji(pred, mask) > 0.95


def test_nss_positive_for_aligned_prediction():
    pred = gaussian_map((64, 64), 20, 20, 4.0)
    mask = np.zeros((64, 64), dtype=bool)
    mask[20, 20] = True
    value, flag = salmetrics.nss(pred, mask)
    assert not flag
    assert value > 3.0


def test_score_ranges_on_random_maps():
    rng = np.random.default_rng(0)
    for seed in range(10):
        r = np.random.default_rng(seed)
        pred = r.random((32, 32))
        pred /= pred.sum()
        gt = gaussian_map((32, 32), r.integers(5, 27), r.integers(5, 27), 3.0)
        mask = np.zeros((32, 32), dtype=bool)
        mask[r.integers(0, 32, 3), r.integers(0, 32, 3)] = True
        s = salmetrics.saliency_metrics(pred, gt, mask)
        assert -1.0 <= s.cc <= 1.0
        assert 0.0 <= s.sim <= 1.0
        assert 0.0 <= s.auc_judd <= 1.0
        assert 0.0 <= s.auc_borji <= 1.0
        assert s.kl >= 0.0  # materially distinct maps


def test_kl_zero_mass_cells_ignored():
    pred = gaussian_map((16, 16), 8, 8, 2.0)
    gt = np.zeros((16, 16))
    gt[4, 4] = 1.0
    v = salmetrics.kl(pred, gt)
    assert np.isfinite(v) and v > 0


def test_auc_borji_deterministic():
    pred = gaussian_map((32, 32), 10, 20, 3.0)
    mask = np.zeros((32, 32), dtype=bool)
    mask[10, 20] = mask[12, 21] = True
    assert salmetrics.auc_borji(pred, mask) == salmetrics.auc_borji(pred, mask)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        salmetrics.saliency_metrics(np.ones((4, 4)), np.ones((5, 5)), np.zeros((4, 4), dtype=bool))


def test_self_comparison_through_pipeline():
    # Build one map from fixations and compare it with itself, the exact
    # harness-sanity configuration.
    sps = [Scanpath([Fixation(40.0, 50.0, 0.0, 0.2), Fixation(10.0, 12.0, 0.3, 0.2)], "img")]
    sal = build_saliency(sps, dims=(64, 64), sigma=4.0)
    mask = fixation_mask(sps, (64, 64))
    scores = salmetrics.saliency_metrics(sal, sal, mask)
    assert scores.cc == pytest.approx(1.0, abs=1e-12)
    assert scores.sim == pytest.approx(1.0, abs=1e-12)
    assert scores.kl < 1e-6
    assert scores.auc_judd > 0.9
