"""Metric tests against the independent brute-force oracles in
`oracles.py`, plus axiom and aggregation checks."""

import numpy as np
import pytest

from gazediff import metrics
from oracles import dtw_brute, edit_distance_recursive, frechet_naive, tde_brute

FRAME = (224, 224)


def rand_seq(rng, n):
    return rng.uniform(0, 223, (n, 2))


# ---------------------------------------------------------------------------
# Levenshtein


def scanpath_for_word(word):
    # One column per letter of the alphabet on a 1 x 26 grid: the cell
    # string of the scanpath spells the word.
    cols = 26
    w = FRAME[1]
    pts = [((ord(ch) - ord("a") + 0.5) * w / cols, 10.0) for ch in word]
    return np.array(pts)


def test_levenshtein_kitten_sitting():
    a = scanpath_for_word("kitten")
    b = scanpath_for_word("sitting")
    assert metrics.levenshtein(a, b, FRAME, grid=(1, 26)) == 3


def test_levenshtein_identity_and_empty():
    a = scanpath_for_word("gaze")
    assert metrics.levenshtein(a, a, FRAME, grid=(1, 26)) == 0
    assert metrics.levenshtein(a, np.zeros((0, 2)), FRAME, grid=(1, 26)) == len(a)
    assert metrics.levenshtein(np.zeros((0, 2)), a, FRAME, grid=(1, 26)) == len(a)


def test_levenshtein_matches_recursive_definition():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rand_seq(rng, rng.integers(1, 9))
        b = rand_seq(rng, rng.integers(1, 9))
        sa = tuple(metrics.cell_string(a, FRAME))
        sb = tuple(metrics.cell_string(b, FRAME))
        assert metrics.levenshtein(a, b, FRAME) == edit_distance_recursive(sa, sb)


def test_cell_string_grid_bounds():
    pts = np.array([[0.0, 0.0], [223.0, 223.0]])
    syms = metrics.cell_string(pts, FRAME, grid=(12, 16))
    assert syms[0] == 0
    assert syms[1] == 12 * 16 - 1


# ---------------------------------------------------------------------------
# DTW


def test_dtw_identity_and_single_pair():
    rng = np.random.default_rng(1)
    a = rand_seq(rng, 6)
    assert metrics.dtw(a, a) == pytest.approx(0.0, abs=1e-12)
    assert metrics.dtw([(0.0, 0.0)], [(3.0, 4.0)]) == pytest.approx(5.0)


def test_dtw_matches_alignment_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a = rand_seq(rng, rng.integers(1, 9))
        b = rand_seq(rng, rng.integers(1, 9))
        assert metrics.dtw(a, b) == pytest.approx(dtw_brute(a, b), abs=1e-9)


# ---------------------------------------------------------------------------
# Discrete Frechet


def test_frechet_identity_and_single_pair():
    rng = np.random.default_rng(3)
    a = rand_seq(rng, 5)
    assert metrics.frechet(a, a) == pytest.approx(0.0, abs=1e-12)
    assert metrics.frechet([(0.0, 0.0)], [(3.0, 4.0)]) == pytest.approx(5.0)


def test_frechet_matches_memoless_recursion_small():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = rand_seq(rng, rng.integers(1, 7))
        b = rand_seq(rng, rng.integers(1, 7))
        assert metrics.frechet(a, b) == pytest.approx(frechet_naive(a, b, memo=False), abs=1e-9)


def test_frechet_matches_recursion_len8():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = rand_seq(rng, rng.integers(1, 9))
        b = rand_seq(rng, rng.integers(1, 9))
        assert metrics.frechet(a, b) == pytest.approx(frechet_naive(a, b, memo=True), abs=1e-9)


# ---------------------------------------------------------------------------
# Time-delay embedding


def test_tde_identity_and_k1():
    rng = np.random.default_rng(6)
    a = rand_seq(rng, 8)
    assert metrics.tde(a, a) == pytest.approx(0.0, abs=1e-12)
    assert metrics.tde([(0.0, 0.0)], [(3.0, 4.0)], k=1, stride=1) == pytest.approx(5.0)


def test_tde_matches_double_loop():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(1, 4))
        a = rand_seq(rng, rng.integers(k, 9))
        b = rand_seq(rng, rng.integers(k, 9))
        stride = int(rng.integers(1, 3))
        got = metrics.tde(a, b, k=k, stride=stride)
        assert got == pytest.approx(tde_brute(a, b, k, stride), abs=1e-9)


def test_tde_too_short_errors():
    with pytest.raises(ValueError):
        metrics.tde([(0.0, 0.0)], [(1.0, 1.0)], k=3)


# ---------------------------------------------------------------------------
# Metric axioms


def test_metric_axioms_identity_and_symmetry():
    rng = np.random.default_rng(8)
    for _ in range(30):
        a = rand_seq(rng, rng.integers(5, 10))
        b = rand_seq(rng, rng.integers(5, 10))
        for d in (metrics.dtw, metrics.frechet):
            assert d(a, a) == pytest.approx(0.0, abs=1e-12)
            assert d(a, b) == pytest.approx(d(b, a), abs=1e-9)
        assert metrics.levenshtein(a, b, FRAME) == metrics.levenshtein(b, a, FRAME)
        assert metrics.tde_symmetric(a, b) == pytest.approx(metrics.tde_symmetric(b, a), abs=1e-12)
        assert metrics.tde(a, a) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Best/mean aggregation


def test_aggregation_reproduces_hand_computed_matrix():
    table = {("g0", "s0"): 1.0, ("g0", "s1"): 2.0, ("g1", "s0"): 3.0, ("g1", "s1"): 4.0}
    metric = lambda g, s: table[(g, s)]
    best, mean = metrics.aggregate_image(["g0", "g1"], ["s0", "s1"], metric)
    assert best == pytest.approx(2.0)
    assert mean == pytest.approx(2.5)


def test_aggregation_single_pair():
    d = lambda a, b: float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    best, mean = metrics.aggregate_image([(0.0, 0.0)], [(3.0, 4.0)], d)
    assert best == mean == pytest.approx(5.0)


def test_best_zero_when_gt_copified():
    rng = np.random.default_rng(9)
    gt = [rand_seq(rng, 6) for _ in range(3)]
    gen = gt + [rand_seq(rng, 6)]
    best, mean = metrics.aggregate_image(gt, gen, metrics.dtw)
    assert best == pytest.approx(0.0, abs=1e-12)
    assert mean >= best


def test_adding_candidates_never_increases_best():
    rng = np.random.default_rng(10)
    gt = [rand_seq(rng, 5) for _ in range(2)]
    gen = [rand_seq(rng, 5) for _ in range(3)]
    extra = gen + [rand_seq(rng, 5)]
    b1, _ = metrics.aggregate_image(gt, gen, metrics.dtw)
    b2, _ = metrics.aggregate_image(gt, extra, metrics.dtw)
    assert b2 <= b1 + 1e-12


def test_best_le_mean_on_every_row():
    rng = np.random.default_rng(11)
    gt_by = {f"i{k}": [rand_seq(rng, 6) for _ in range(3)] for k in range(4)}
    gen_by = {f"i{k}": [rand_seq(rng, 6) for _ in range(5)] for k in range(4)}
    best, mean, report = metrics.aggregate(gt_by, gen_by, metrics.dtw, "dtw")
    assert best <= mean
    for row in report.scores:
        assert row.best <= row.mean + 1e-12


def test_aggregate_empty_generated_raises():
    with pytest.raises(ValueError):
        metrics.aggregate_image([(0.0, 0.0)], [], lambda a, b: 0.0)


def test_report_csv_and_overall(tmp_path):
    report = metrics.MetricReport()
    report.add("imgA", "dtw", 1.0, 2.0)
    report.add("imgB", "dtw", 3.0, 4.0)
    assert report.overall()["dtw"] == {"best": 2.0, "mean": 3.0}
    p = tmp_path / "report.csv"
    report.to_csv(p, dataset="synthetic")
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "dataset,image,metric,mean,best"
    assert lines[1].startswith("synthetic,imgA,dtw,")
