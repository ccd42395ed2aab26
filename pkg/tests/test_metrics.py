"""Metric oracles and the target-rotation evaluation harness."""

import math

import numpy as np
import pytest

from groupreg.errors import ShapeError
from groupreg.metrics import (CSV_HEADER, MetricReport, endpoint_error,
                              evaluate_series, report_to_csv, rsnr, ssim,
                              unregistered_motion_px)


def test_rsnr_hand_case():
    ref = np.full((4,), 2.0)
    x = np.array([3.0, 1.0, 3.0, 1.0])  # NMSE = 4/16 -> 6.0206 dB
    assert rsnr(ref, x) == pytest.approx(6.0206, abs=1e-4)


def test_rsnr_sentinel_and_validation():
    ref = np.ones((3, 3))
    assert math.isinf(rsnr(ref, ref.copy()))
    with pytest.raises(ValueError):
        rsnr(np.zeros((3, 3)), np.ones((3, 3)))
    with pytest.raises(ShapeError):
        rsnr(np.ones((3, 3)), np.ones((3, 4)))


def test_ssim_self_comparison_is_one():
    img = np.random.default_rng(0).standard_normal((24, 24))
    assert ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-12)


def ssim_oracle(ref, x, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Independent loop implementation over all valid windows."""
    half = (window - 1) / 2.0
    g = np.exp(-((np.arange(window) - half) ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    L = max(ref.max(), x.max()) - min(ref.min(), x.min())
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    h, wd = ref.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(wd - window + 1):
            a = ref[i:i + window, j:j + window]
            b = x[i:i + window, j:j + window]
            mu_a, mu_b = np.sum(w * a), np.sum(w * b)
            va = np.sum(w * a * a) - mu_a ** 2
            vb = np.sum(w * b * b) - mu_b ** 2
            cov = np.sum(w * a * b) - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(1)
    ref = rng.standard_normal((20, 22))
    x = ref + 0.3 * rng.standard_normal((20, 22))
    assert abs(ssim(ref, x) - ssim_oracle(ref, x)) <= 1e-8


def test_ssim_validation():
    with pytest.raises(ShapeError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))  # smaller than the window
    with pytest.raises(ValueError):
        ssim(np.ones((16, 16)), np.ones((16, 16)))  # zero dynamic range


def test_endpoint_error_3_4_5_case():
    est = np.zeros((2, 4, 4))
    gt = np.zeros((2, 4, 4))
    est[0] = 3.0
    est[1] = 4.0
    assert endpoint_error(est, gt) == pytest.approx(5.0)


def test_endpoint_error_mask():
    est = np.zeros((2, 2, 2))
    gt = np.zeros((2, 2, 2))
    est[0, 0, 0] = 2.0
    mask = np.zeros((2, 2), dtype=bool)
    mask[0, 0] = True
    assert endpoint_error(est, gt, mask) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        endpoint_error(est, gt, np.zeros((2, 2), dtype=bool))


def test_report_csv_header_and_sentinel_cap():
    report = MetricReport()
    report.add("m", 6.0, 0, math.inf, 1.0, 0.5)
    report.add("m", 6.0, 1, 10.0, 0.9, 0.7)
    csv = report_to_csv(report)
    lines = csv.strip().split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("m,6.0,0,inf,")
    agg = report.aggregate()["m"]["6.0"]
    assert agg["n"] == 2
    assert agg["rsnr_mean"] == pytest.approx((300.0 + 10.0) / 2)
    assert agg["epe_mean"] == pytest.approx(0.6)


def test_evaluate_series_plain_mean_matches_direct_metric_calls():
    rng = np.random.default_rng(2)
    clean = rng.standard_normal((3, 16, 16))
    frames = clean + 0.1 * rng.standard_normal((3, 16, 16))

    def register_fn(idx):
        others = [j for j in range(3) if j != idx]
        return np.mean(frames[others], axis=0), None

    report = evaluate_series(frames, clean, register_fn, "mean", snr_db=11.0)
    assert len(report.rows) == 3
    for idx, row in enumerate(report.rows):
        registered, _ = register_fn(idx)
        assert row["rsnr_db"] == pytest.approx(rsnr(clean[idx], registered))
        assert row["ssim"] == pytest.approx(ssim(clean[idx], registered))
        assert row["epe_px"] is None


def test_evaluate_series_epe_uses_pairwise_truth():
    gt = np.zeros((2, 2, 12, 12))
    gt[1, 0] = 1.0  # frame 1 displaced one pixel down relative to frame 0

    clean = np.zeros((2, 12, 12))
    clean[:, 1, 1] = 1.0
    frames = clean.copy()

    def register_fn(idx):
        return clean[idx], [np.zeros((2, 12, 12))]

    report = evaluate_series(frames, clean + 1e-3, register_fn, "m", gt_fields=gt)
    # target 0: truth is gt[0]-gt[1] with magnitude 1 everywhere
    assert report.rows[0]["epe_px"] == pytest.approx(1.0)
    assert report.rows[1]["epe_px"] == pytest.approx(1.0)
    assert unregistered_motion_px(gt) == pytest.approx(1.0)
