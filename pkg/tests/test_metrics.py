"""Error metrics: hand-checked values, zero-norm flagging, percentile law."""

import numpy as np
import pytest

from prior_refine import metrics
from prior_refine.errors import InvalidArgumentError


def test_rel_l2_hand_example():
    # one frame: true = [3, 4] (norm 5), pred = [3, 0] -> diff norm 4 -> 0.8
    true = np.array([[[3.0, 4.0]]])
    pred = np.array([[[3.0, 0.0]]])
    assert metrics.rel_l2(true, pred) == pytest.approx(0.8, abs=1e-12)


def test_rel_l2_averages_over_frames():
    true = np.stack([np.full((2, 2), 2.0), np.full((2, 2), 4.0)])
    pred = true.copy()
    pred[0] += 1.0  # frame 0: ||1||/||2|| = 0.5; frame 1: 0
    assert metrics.rel_l2(true, pred) == pytest.approx(0.25, abs=1e-12)


def test_rmae_hand_example():
    true = np.array([[[1.0, -1.0]]])
    pred = np.array([[[2.0, -1.0]]])
    # |diff| sums to 1, |true| sums to 2
    assert metrics.rmae(true, pred) == pytest.approx(0.5, abs=1e-12)


def test_mae_plain_mean():
    true = np.zeros((2, 2, 2))
    pred = np.full((2, 2, 2), 3.0)
    assert metrics.mae(true, pred) == pytest.approx(3.0, abs=1e-15)


def test_perfect_prediction_is_zero():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 6, 6))
    assert metrics.rel_l2(x, x) == 0.0
    assert metrics.rmae(x, x) == 0.0
    assert metrics.mae(x, x) == 0.0


def test_relative_metrics_are_asymmetric():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 5, 5))
    b = a + rng.normal(scale=0.3, size=a.shape)
    assert metrics.rel_l2(a, b) != pytest.approx(metrics.rel_l2(b, a))


def test_relative_metrics_scale_invariant_absolute_not():
    rng = np.random.default_rng(3)
    true = rng.normal(size=(3, 4, 4))
    pred = true + rng.normal(scale=0.1, size=true.shape)
    assert metrics.rel_l2(10 * true, 10 * pred) == pytest.approx(metrics.rel_l2(true, pred))
    assert metrics.mae(10 * true, 10 * pred) == pytest.approx(10 * metrics.mae(true, pred))


def test_zero_norm_frames_skipped_and_counted():
    true = np.stack([np.zeros((2, 2)), np.full((2, 2), 2.0)])
    pred = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 3.0)])
    # frame 0 has zero true norm -> excluded; frame 1 contributes 0.5
    assert metrics.rel_l2(true, pred) == pytest.approx(0.5)
    errs = metrics.case_errors("c", true, pred)
    assert errs.flagged_frames == 1


def test_all_zero_truth_gives_inf():
    true = np.zeros((3, 2, 2))
    pred = np.ones((3, 2, 2))
    assert metrics.rel_l2(true, pred) == np.inf


def test_zero_norm_included_when_asked():
    true = np.stack([np.zeros((2, 2)), np.full((2, 2), 2.0)])
    pred = np.stack([np.zeros((2, 2)), np.full((2, 2), 3.0)])
    # frame 0 contributes 0/0 -> nan under skip_zero_norm=False
    val = metrics.rel_l2(true, pred, skip_zero_norm=False)
    assert np.isnan(val) or np.isinf(val)


def test_percentile_report_linear_interpolation():
    report = metrics.percentile_report(list(range(1, 101)))
    assert report["best"] == pytest.approx(1.0)
    assert report["p25"] == pytest.approx(25.75)
    assert report["p50"] == pytest.approx(50.5)
    assert report["p75"] == pytest.approx(75.25)
    assert report["worst"] == pytest.approx(100.0)


def test_percentile_report_single_value():
    report = metrics.percentile_report([4.2])
    assert all(v == pytest.approx(4.2) for v in report.values())


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidArgumentError):
        metrics.rel_l2(np.zeros((2, 3, 3)), np.zeros((3, 3, 3)))
    with pytest.raises(InvalidArgumentError):
        metrics.mae(np.zeros((3, 3)), np.zeros((3, 3)))  # not (T, H, W)


def test_case_errors_carries_id():
    e = metrics.case_errors("case-07", np.ones((2, 2, 2)), np.ones((2, 2, 2)))
    assert e.case_id == "case-07"
    assert e.rel_l2 == 0.0
