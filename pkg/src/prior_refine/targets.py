"""Residual-target pipeline: R = gt - prior, global affine map to [-1, 1],
and exact reconstruction of the refined solution.

One scalar (r_min, r_max) pair per dataset, fitted on the training split
only. Sampled residuals are never clamped before denormalization (clamping
would bias the extrema); values escaping [-1, 1] by more than 5% are logged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScalerError, InvalidArgumentError

log = logging.getLogger(__name__)

_OVERSHOOT = 1.05


@dataclass
class ResidualScaler:
    r_min: float
    r_max: float

    def __post_init__(self):
        self.r_min = float(self.r_min)
        self.r_max = float(self.r_max)
        if not (np.isfinite(self.r_min) and np.isfinite(self.r_max)):
            raise DegenerateScalerError("residual extrema must be finite")
        if self.r_min >= self.r_max:
            raise DegenerateScalerError(
                f"residual extrema coincide or are inverted: ({self.r_min}, {self.r_max})"
            )

    def to_dict(self):
        return {"r_min": self.r_min, "r_max": self.r_max}

    @classmethod
    def from_dict(cls, d):
        return cls(r_min=d["r_min"], r_max=d["r_max"])


def _as_arrays(*items):
    out = []
    for item in items:
        out.append(np.asarray(item.data if hasattr(item, "data") else item))
    return out


def make_residual(gt, prior) -> np.ndarray:
    gt, prior = _as_arrays(gt, prior)
    if gt.shape != prior.shape:
        raise InvalidArgumentError(f"gt shape {gt.shape} != prior shape {prior.shape}")
    return gt - prior


def fit_scaler(residuals) -> ResidualScaler:
    """Global extrema across every element of every listed residual video."""
    residuals = list(residuals)
    if not residuals:
        raise InvalidArgumentError("cannot fit a scaler on an empty residual list")
    r_min = min(float(np.min(np.asarray(r))) for r in residuals)
    r_max = max(float(np.max(np.asarray(r))) for r in residuals)
    return ResidualScaler(r_min=r_min, r_max=r_max)


def normalize(r, scaler: ResidualScaler) -> np.ndarray:
    """Affine map sending r_min -> -1 and r_max -> +1."""
    r = np.asarray(r)
    return 2.0 * (r - scaler.r_min) / (scaler.r_max - scaler.r_min) - 1.0


def denormalize(r_hat, scaler: ResidualScaler) -> np.ndarray:
    r_hat = np.asarray(r_hat)
    over = np.abs(r_hat) > _OVERSHOOT
    if over.any():
        log.warning(
            "sampled residual escapes [-1, 1]: %d/%d elements beyond %.2f (max |r|=%.3f)",
            int(over.sum()), r_hat.size, _OVERSHOOT, float(np.abs(r_hat).max()),
        )
    return (r_hat + 1.0) / 2.0 * (scaler.r_max - scaler.r_min) + scaler.r_min


def reconstruct(r_hat, prior, scaler: ResidualScaler) -> np.ndarray:
    """x_hat = denormalized residual + prior."""
    (prior,) = _as_arrays(prior)
    r_hat = np.asarray(r_hat)
    if r_hat.shape != prior.shape:
        raise InvalidArgumentError(f"residual shape {r_hat.shape} != prior shape {prior.shape}")
    return denormalize(r_hat, scaler) + prior
