import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from dainr.metrics import PSNR_EXACT, MetricReport, error_maps, evaluate_sequence, normalize_sequence, psnr, roi_curve, ssim


def _binary(rng, n=32):
    return (rng.random((n, n)) > 0.5).astype(float)


def test_normalize_two_values():
    np.testing.assert_array_equal(normalize_sequence(np.array([[[0.0, 2.0]]])), [[[0.0, 1.0]]])


def test_normalization_is_sequence_global():
    seq = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 4.0), np.zeros((2, 2))])
    out = normalize_sequence(seq)
    assert out[0].max() == pytest.approx(0.25)


def test_normalization_idempotent(rng):
    seq = rng.standard_normal((3, 5, 5)) + 1j * rng.standard_normal((3, 5, 5))
    once = normalize_sequence(seq)
    np.testing.assert_allclose(normalize_sequence(once), once)


def test_constant_sequence_rejected():
    with pytest.raises(ValueError):
        normalize_sequence(np.ones((2, 3, 3)))


def test_psnr_examples(rng):
    a = rng.random((10, 10))
    assert psnr(a, a) == PSNR_EXACT
    assert psnr(np.zeros((10, 10)), np.full((10, 10), 0.1)) == pytest.approx(20.0)
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.0)


def test_psnr_decreases_with_noise(rng):
    a = rng.random((32, 32))
    noise = rng.standard_normal((32, 32))
    values = [psnr(a, a + s * noise) for s in (0.01, 0.02, 0.05, 0.1)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ssim_identical_is_one(rng):
    a = rng.random((24, 24))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_binary_versus_inverse(rng):
    a = _binary(rng)
    value = ssim(a, 1 - a)
    assert value < 0.2
    assert value == pytest.approx(structural_similarity(a, 1 - a, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                                        use_sample_covariance=False), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_matches_reference_and_is_symmetric(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((16, 20)), r.random((16, 20))
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-12)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12
    assert -1 <= ssim(a, b) <= 1


def test_ssim_small_frame_rejected():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_roi_curve_constant_image():
    seq = np.full((4, 8, 8), 3.0)
    mask = np.zeros((8, 8), bool)
    mask[2:4, 5:7] = True
    np.testing.assert_allclose(roi_curve(seq, mask), 3.0)


def test_roi_curve_ignores_outside(rng):
    seq = rng.random((3, 8, 8))
    mask = np.zeros((8, 8), bool)
    mask[1:3, 1:3] = True
    other = seq.copy()
    other[:, ~mask] = 100
    np.testing.assert_array_equal(roi_curve(seq, mask), roi_curve(other, mask))


def test_empty_roi_rejected():
    with pytest.raises(ValueError):
        roi_curve(np.ones((2, 4, 4)), np.zeros((4, 4), bool))


def test_error_maps_range(rng):
    a, b = rng.random((2, 12, 12)), rng.random((2, 12, 12))
    e = error_maps(a, b)
    assert e.shape == a.shape and e.min() >= 0 and e.max() <= 1


def test_report_csv_with_ground_truth(tmp_path, rng):
    gt = rng.random((3, 16, 16))
    mask = np.ones((16, 16), bool)
    report = evaluate_sequence(gt, gt, {"roi": mask})
    report.write_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["frame", "psnr_db", "ssim", "roi"]
    assert rows[1][1] == "exact" and float(rows[1][2]) == pytest.approx(1.0)
    assert math.isinf(report.mean_psnr)


def test_report_roi_only(tmp_path, rng):
    report = evaluate_sequence(rng.random((3, 16, 16)), None, {"a": np.ones((16, 16), bool)})
    report.write_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["frame", "a"] and len(rows) == 4
    assert math.isnan(MetricReport().mean_psnr)
