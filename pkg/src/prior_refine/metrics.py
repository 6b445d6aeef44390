"""Error metrics and percentile reporting for field-video predictions.

Relative metrics are frame-wise norm ratios averaged over time, normalized by
the ground truth only. Frames whose ground-truth norm is zero make the ratio
blow up; they are flagged and, by default, excluded from the frame average
(MAE is always computed over everything).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class CaseErrors:
    case_id: str
    rel_l2: float
    rmae: float
    mae: float
    flagged_frames: int = 0


def _frames(true, pred):
    true = np.asarray(true.data if hasattr(true, "data") else true, dtype=np.float64)
    pred = np.asarray(pred.data if hasattr(pred, "data") else pred, dtype=np.float64)
    if true.shape != pred.shape:
        raise InvalidArgumentError(f"shape mismatch: true {true.shape} vs pred {pred.shape}")
    if true.ndim != 3:
        raise InvalidArgumentError(f"expected (T, H, W) videos, got {true.shape}")
    return true, pred


def _relative(true, pred, ord: int, skip_zero_norm: bool) -> tuple[float, int]:
    true, pred = _frames(true, pred)
    t = true.shape[0]
    diff = (true - pred).reshape(t, -1)
    ref = true.reshape(t, -1)
    if ord == 2:
        num = np.linalg.norm(diff, axis=1)
        den = np.linalg.norm(ref, axis=1)
    else:
        num = np.abs(diff).sum(axis=1)
        den = np.abs(ref).sum(axis=1)
    flagged = den == 0.0
    n_flagged = int(flagged.sum())
    if skip_zero_norm:
        kept = ~flagged
        if not kept.any():
            return float("inf"), n_flagged
        return float(np.mean(num[kept] / den[kept])), n_flagged
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(flagged, np.inf, num / np.maximum(den, 1e-300))
    return float(np.mean(ratios)), n_flagged


def rel_l2(true, pred, skip_zero_norm: bool = True) -> float:
    """(1/T) sum_t ||true_t - pred_t||_2 / ||true_t||_2."""
    return _relative(true, pred, 2, skip_zero_norm)[0]


def rmae(true, pred, skip_zero_norm: bool = True) -> float:
    """Same frame-wise ratio with 1-norms."""
    return _relative(true, pred, 1, skip_zero_norm)[0]


def mae(true, pred) -> float:
    """Mean absolute deviation over all (t, h, w), in field units."""
    true, pred = _frames(true, pred)
    return float(np.mean(np.abs(true - pred)))


def case_errors(case_id: str, true, pred, skip_zero_norm: bool = True) -> CaseErrors:
    l2, n_flagged = _relative(true, pred, 2, skip_zero_norm)
    l1, _ = _relative(true, pred, 1, skip_zero_norm)
    return CaseErrors(case_id=case_id, rel_l2=l2, rmae=l1, mae=mae(true, pred), flagged_frames=n_flagged)


def percentile_report(errors) -> dict:
    """{best, p25, p50, p75, worst} with linearly interpolated percentiles."""
    errors = np.asarray(list(errors), dtype=np.float64)
    if errors.size == 0:
        raise InvalidArgumentError("percentile report needs at least one value")
    p25, p50, p75 = np.percentile(errors, [25, 50, 75])
    return {
        "best": float(errors.min()),
        "p25": float(p25),
        "p50": float(p50),
        "p75": float(p75),
        "worst": float(errors.max()),
    }
