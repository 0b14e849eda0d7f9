import numpy as np
import pytest

from gazediff import events


def dwell(point, n, jitter=0.0, seed=0):
    pts = np.tile(np.asarray(point, dtype=float), (n, 1))
    if jitter:
        pts += np.random.default_rng(seed).uniform(-jitter, jitter, pts.shape)
    return pts


def test_constant_trajectory_single_fixation():
    traj = dwell((50.0, 80.0), 240)
    fixes = events.extract_fixations(traj, rate_hz=240.0)
    assert len(fixes) == 1
    f = fixes[0]
    assert (f.x, f.y) == (50.0, 80.0)
    assert f.duration == pytest.approx(1.0)
    assert f.onset == 0.0


def test_two_dwells_with_jump_give_two_fixations():
    a = dwell((20.0, 20.0), 120)
    b = dwell((180.0, 180.0), 120)
    fixes = events.extract_fixations(np.vstack([a, b]), rate_hz=240.0)
    assert len(fixes) == 2
    assert fixes[0].duration == pytest.approx(0.5)
    assert fixes[1].duration == pytest.approx(0.5)
    assert fixes[0].onset < fixes[1].onset
    # Same with a single stray sample in between.
    mid = np.array([[400.0, 0.0]])
    fixes = events.extract_fixations(np.vstack([a, mid, b]), rate_hz=240.0)
    assert len(fixes) == 2


def test_oscillation_yields_no_fixation():
    n = 480
    traj = np.zeros((n, 2))
    traj[::2, 0] = 0.0
    traj[1::2, 0] = 100.0  # above the default dispersion threshold every sample
    assert events.extract_fixations(traj, rate_hz=240.0) == []


def test_upsampling_invariance():
    rng = np.random.default_rng(4)
    segs = []
    for center in [(30, 30), (150, 60), (90, 190)]:
        segs.append(dwell(center, rng.integers(30, 80), jitter=2.0, seed=len(segs)))
        segs.append(np.array([[rng.uniform(0, 223), rng.uniform(0, 223)]]))
    traj = np.vstack(segs)
    base = events.extract_fixations(traj, rate_hz=240.0)
    for k in (2, 3):
        up = np.repeat(traj, k, axis=0)
        fixes = events.extract_fixations(up, rate_hz=240.0 * k)
        assert len(fixes) == len(base)
        for f, g in zip(base, fixes):
            assert g.duration == pytest.approx(f.duration)
            assert g.x == pytest.approx(f.x, abs=1e-9)


def test_total_fixation_duration_bounded_by_trajectory():
    rng = np.random.default_rng(5)
    traj = rng.uniform(0, 223, (720, 2))
    traj[100:400] = dwell((50, 50), 300, jitter=3.0)
    fixes = events.extract_fixations(traj, rate_hz=240.0)
    assert sum(f.duration for f in fixes) <= 720 / 240.0 + 1e-12


def test_empty_trajectory_rejected():
    with pytest.raises(ValueError):
        events.extract_fixations(np.zeros((0, 2)), rate_hz=240.0)


# ---------------------------------------------------------------------------
# Saliency maps


def one_fix_scanpath(x, y, sid="img"):
    return events.Scanpath([events.Fixation(x, y, 0.0, 0.2)], sid)


def test_single_fixation_map_peaks_at_center():
    sal = events.build_saliency([one_fix_scanpath(32.0, 32.0)], dims=(65, 65), sigma=5.0)
    iy, ix = np.unravel_index(np.argmax(sal.values), sal.values.shape)
    assert (iy, ix) == (32, 32)
    assert sal.values.sum() == pytest.approx(1.0, abs=1e-9)
    # Radial symmetry around the peak.
    assert sal.values[32, 40] == pytest.approx(sal.values[32, 24], rel=1e-9)
    assert sal.values[40, 32] == pytest.approx(sal.values[24, 32], rel=1e-9)


def test_two_equal_fixations_equal_peaks():
    sal = events.build_saliency(
        [one_fix_scanpath(20.0, 32.0), one_fix_scanpath(44.0, 32.0)], dims=(65, 65), sigma=3.0
    )
    assert sal.values[32, 20] == pytest.approx(sal.values[32, 44], rel=1e-9)


def test_saliency_normalized_for_random_inputs():
    rng = np.random.default_rng(6)
    sps = [
        one_fix_scanpath(rng.uniform(0, 223), rng.uniform(0, 223), f"i{k}") for k in range(17)
    ]
    sal = events.build_saliency(sps, dims=(224, 224))
    assert sal.values.sum() == pytest.approx(1.0, abs=1e-9)
    assert (sal.values >= 0).all()


def test_saliency_commutes_with_permutation():
    rng = np.random.default_rng(7)
    sps = [one_fix_scanpath(rng.uniform(0, 63), rng.uniform(0, 63)) for _ in range(9)]
    a = events.build_saliency(sps, dims=(64, 64), sigma=4.0)
    b = events.build_saliency(sps[::-1], dims=(64, 64), sigma=4.0)
    np.testing.assert_array_equal(a.values, b.values)


def test_zero_fixations_is_an_error():
    with pytest.raises(ValueError):
        events.build_saliency([events.Scanpath([], "img")], dims=(32, 32))


def test_pfm_pgm_roundtrip(tmp_path):
    sal = events.build_saliency([one_fix_scanpath(10.0, 20.0)], dims=(32, 48), sigma=2.0)
    p = tmp_path / "map.pfm"
    events.save_saliency_pfm(p, sal)
    back = events.load_saliency_pfm(p)
    np.testing.assert_allclose(back.values, sal.values, rtol=1e-6)
    events.save_saliency_pgm(tmp_path / "map.pgm", sal)
    raw = (tmp_path / "map.pgm").read_bytes()
    assert raw.startswith(b"P5\n48 32\n255\n")
    assert len(raw.split(b"255\n", 1)[1]) == 32 * 48


# ---------------------------------------------------------------------------
# Saccade statistics


def path_from_points(pts, sid="img"):
    fixes = [events.Fixation(x, y, 0.25 * i, 0.2) for i, (x, y) in enumerate(pts)]
    return events.Scanpath(fixes, sid)


def test_amplitude_and_direction_closed_form():
    stats = events.scanpath_stats([path_from_points([(0, 0), (3, 4)])])
    assert stats.amplitudes_px[0] == pytest.approx(5.0)
    assert stats.directions_deg[0] == pytest.approx(53.13010235415598)
    assert len(stats.inter_saccade_deg) == 0


def test_collinear_saccades_zero_turn():
    stats = events.scanpath_stats([path_from_points([(0, 0), (10, 0), (25, 0)])])
    assert stats.inter_saccade_deg[0] == pytest.approx(0.0)


def test_reversal_is_half_turn():
    stats = events.scanpath_stats([path_from_points([(0, 0), (10, 0), (0, 0)])])
    assert abs(stats.inter_saccade_deg[0]) == pytest.approx(180.0)


def test_short_scanpaths_contribute_nothing():
    stats = events.scanpath_stats([path_from_points([(5, 5)]), events.Scanpath([], "e")])
    assert len(stats.amplitudes_px) == 0


def test_angle_histogram_bins():
    stats = events.scanpath_stats([path_from_points([(0, 0), (10, 0), (20, 0)])])
    counts, edges = events.angle_histogram(stats.directions_deg)
    assert counts.sum() == 2
    assert len(counts) == 36
    assert counts[18] == 2  # [0, 10) holds the 0-degree saccades


def test_horizontal_bias_peak_helper():
    counts = np.ones(36)
    counts[18] = 10.0
    counts[0] = 8.0
    p0, p180, mean = events.horizontal_bias_peaks(counts)
    assert p0 == 10.0 and p180 == 8.0
    assert p0 > 1.5 * mean and p180 > 1.5 * mean


def test_scanpath_file_roundtrip(tmp_path):
    sps = [
        path_from_points([(1.5, 2.5), (3.0, 4.0)], "imgA"),
        path_from_points([(9.0, 9.0), (1.0, 7.0), (4.0, 4.0)], "imgB"),
        path_from_points([(5.0, 5.0)], "imgA"),
    ]
    p = tmp_path / "scanpaths.txt"
    events.save_scanpaths(p, sps)
    back = events.load_scanpaths(p)
    assert len(back) == 3
    by_sid = sorted((sp.stimulus_id, len(sp)) for sp in back)
    assert by_sid == [("imgA", 1), ("imgA", 2), ("imgB", 3)]
    first = [sp for sp in back if sp.stimulus_id == "imgA" and len(sp) == 2][0]
    assert first.fixations[0].x == pytest.approx(1.5)
    assert first.fixations[1].duration == pytest.approx(0.2)
