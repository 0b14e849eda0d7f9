import numpy as np
import pytest

from gazediff import features


def random_grid(seed=0, dims=(8, 8, 4), sid="img0"):
    rng = np.random.default_rng(seed)
    return features.FeatureGrid(rng.normal(size=dims).astype(np.float32), sid)


def test_save_load_identity_at_byte_level(tmp_path):
    g = random_grid()
    p1, p2 = tmp_path / "a.gzfg", tmp_path / "b.gzfg"
    features.save_grid(p1, g)
    back = features.load_grid(p1, standardize_values=False)
    features.save_grid(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.stimulus_id == "img0"


def test_payload_size_arithmetic(tmp_path):
    g = features.FeatureGrid(np.zeros((32, 32, 64), dtype=np.float32), "s")
    p = tmp_path / "g.gzfg"
    features.save_grid(p, g)
    header = 4 + 17 + 2 + len(b"s")
    assert p.stat().st_size - header == 32 * 32 * 64 * 4


def test_nan_cell_rejected(tmp_path):
    g = random_grid()
    p = tmp_path / "bad.gzfg"
    features.save_grid(p, g)
    raw = bytearray(p.read_bytes())
    raw[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    p.write_bytes(bytes(raw))
    with pytest.raises(features.FeatureDataError):
        features.load_grid(p)


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.gzfg"
    p.write_bytes(b"XXXX" + b"\x00" * 40)
    with pytest.raises(features.FeatureFormatError):
        features.load_grid(p)


def test_standardization_invariant(tmp_path):
    g = random_grid(seed=3, dims=(16, 16, 8))
    p = tmp_path / "g.gzfg"
    features.save_grid(p, g)
    loaded = features.load_grid(p)  # standardizes by default
    assert abs(loaded.values.mean()) < 1e-5
    assert abs(loaded.values.std() - 1.0) < 1e-4


def test_standardize_zero_grid_stays_zero():
    g = features.FeatureGrid(np.zeros((4, 4, 2), dtype=np.float32), "z")
    assert np.all(features.standardize(g).values == 0.0)


# ---------------------------------------------------------------------------
# Resampling


def test_resample_identity():
    g = random_grid(seed=1, dims=(6, 5, 3))
    out = features.resample_grid(g, (6, 5))
    np.testing.assert_allclose(out.values, g.values, atol=1e-6)


def test_resample_constant_grid():
    g = features.FeatureGrid(np.full((4, 4, 2), 3.25, dtype=np.float32), "c")
    out = features.resample_grid(g, (9, 7))
    np.testing.assert_allclose(out.values, 3.25, atol=1e-6)


def test_resample_bilinear_center_value():
    g = features.FeatureGrid(np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)[:, :, None], "b")
    out = features.resample_grid(g, (3, 3))
    assert out.values.shape == (3, 3, 1)
    assert abs(out.values[1, 1, 0] - 1.5) < 1e-6


def test_resample_reproduces_linear_ramps():
    ys, xs = np.meshgrid(np.arange(5), np.arange(7), indexing="ij")
    ramp = (2.0 * xs + 3.0 * ys + 1.0)[:, :, None].astype(np.float32)
    out = features.resample_grid(features.FeatureGrid(ramp, "r"), (9, 13)).values[:, :, 0]
    # Corner-aligned positions carry the same affine function.
    ys2 = np.linspace(0, 4, 9)[:, None]
    xs2 = np.linspace(0, 6, 13)[None, :]
    np.testing.assert_allclose(out, 2.0 * xs2 + 3.0 * ys2 + 1.0, atol=1e-5)


# ---------------------------------------------------------------------------
# Synthetic grids


def test_synth_single_blob_peaks_at_center():
    g = features.synth_grid([(0.5, 0.5, 0.1, 2)], (16, 16, 4))
    proj = g.values[:, :, 2]
    iy, ix = np.unravel_index(np.argmax(proj), proj.shape)
    assert (iy, ix) == (8, 8) or (iy, ix) == (7, 7)  # grid parity
    assert np.all(g.values[:, :, [0, 1, 3]] == 0.0)


def test_synth_zero_blobs_all_zero():
    g = features.synth_grid([], (8, 8, 4))
    assert np.all(g.values == 0.0)


def test_synth_orthogonal_signatures_do_not_leak():
    g = features.synth_grid(
        [(0.2, 0.5, 0.05, 0), (0.8, 0.5, 0.05, 1)], (32, 32, 8)
    )
    # Projection of blob 1's signature at blob 0's center and vice versa.
    iy = 16
    assert g.values[iy, int(0.2 * 32), 1] < 1e-6
    assert g.values[iy, int(0.8 * 32), 0] < 1e-6
    # Each blob is visible under its own signature.
    assert g.values[iy, int(0.2 * 32), 0] > 0.5
    assert g.values[iy, int(0.8 * 32), 1] > 0.5


def test_synth_capacity_error():
    with pytest.raises(ValueError):
        features.synth_grid([(0.5, 0.5, 0.1, 4)], (8, 8, 4))


def test_synth_center_bounds():
    with pytest.raises(ValueError):
        features.synth_grid([(1.5, 0.5, 0.1, 0)], (8, 8, 4))
