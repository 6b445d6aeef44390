"""Noise schedule, preconditioning factors, and corruption for the
elucidated formulation.

All closed forms are kept in one place so the identity tests exercise the
exact code the trainer and sampler call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError


@dataclass
class NoiseSchedule:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    sigma_data: float = 0.5
    n_steps: int = 32

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise InvalidArgumentError(
                f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )
        if self.rho <= 0 or self.sigma_data <= 0:
            raise InvalidArgumentError("rho and sigma_data must be positive")
        if self.n_steps < 1:
            raise InvalidArgumentError(f"n_steps={self.n_steps}, need at least 1")

    def to_dict(self):
        return {
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "rho": self.rho,
            "sigma_data": self.sigma_data,
            "n_steps": self.n_steps,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Preconditioners:
    c_in: float
    c_skip: float
    c_out: float
    c_noise: float


def sigma_schedule(schedule: NoiseSchedule, i: int) -> float:
    """sigma_i on the rho-warped grid; sigma_0 = sigma_max, sigma_N = 0."""
    n = schedule.n_steps
    if not 0 <= i <= n:
        raise InvalidArgumentError(f"schedule index {i} outside [0, {n}]")
    if i == n:
        return 0.0
    if n == 1:
        return schedule.sigma_max
    inv_rho = 1.0 / schedule.rho
    lo = schedule.sigma_min**inv_rho
    hi = schedule.sigma_max**inv_rho
    return float((hi + (i / (n - 1)) * (lo - hi)) ** schedule.rho)


def sigmas(schedule: NoiseSchedule) -> np.ndarray:
    """All N+1 levels, descending, ending at exactly 0."""
    return np.array([sigma_schedule(schedule, i) for i in range(schedule.n_steps + 1)])


def precondition(sigma: float, sigma_data: float) -> Preconditioners:
    """Scaling factors wrapping the raw network F into the denoiser D.

    sigma = 0 degenerates gracefully: the denoiser is the identity there
    (c_skip = 1, c_out = 0); c_noise is pinned to 0 since ln(0) diverges and
    the value is never consumed at sigma = 0.
    """
    if sigma < 0 or sigma_data <= 0:
        raise InvalidArgumentError(f"need sigma >= 0 and sigma_data > 0, got ({sigma}, {sigma_data})")
    if sigma == 0.0:
        return Preconditioners(c_in=1.0 / sigma_data, c_skip=1.0, c_out=0.0, c_noise=0.0)
    s2 = sigma**2 + sigma_data**2
    return Preconditioners(
        c_in=1.0 / math.sqrt(s2),
        c_skip=sigma_data**2 / s2,
        c_out=sigma * sigma_data / math.sqrt(s2),
        c_noise=math.log(sigma) / 4.0,
    )


def precondition_batch(sigma, sigma_data: float):
    """Vectorized preconditioners for a tensor of positive noise levels.

    Same closed forms as `precondition`; a property test pins their
    agreement. Returns (c_in, c_skip, c_out, c_noise), each shaped like
    sigma.
    """
    s2 = sigma**2 + sigma_data**2
    c_in = 1.0 / s2**0.5
    c_skip = sigma_data**2 / s2
    c_out = sigma * sigma_data / s2**0.5
    # guard the log so sigma == 0 entries (the clean-data endpoint) produce
    # c_noise = 0 instead of -inf, matching the scalar path; the arithmetic
    # mask works for numpy and torch alike and keeps -inf out of autograd
    zero = (sigma == 0) * 1.0
    c_noise = _log(sigma + zero) / 4.0 * (1.0 - zero)
    return c_in, c_skip, c_out, c_noise


def _log(x):
    return x.log() if hasattr(x, "log") else np.log(x)


def corrupt(x0, sigma: float, eps):
    """Forward corruption x0 + sigma * eps."""
    if hasattr(x0, "shape") and hasattr(eps, "shape") and tuple(x0.shape) != tuple(eps.shape):
        raise InvalidArgumentError(f"noise shape {tuple(eps.shape)} != field shape {tuple(x0.shape)}")
    return x0 + sigma * eps


def edm_weight(sigma, sigma_data: float):
    """Loss weight lambda(sigma) = (sigma^2 + sigma_d^2) / (sigma * sigma_d)^2.

    Equals 1/c_out^2, so weighted squared error matches the elucidated
    objective ((D - x0)/c_out)^2. Works on scalars and arrays/tensors.
    """
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def sample_training_sigmas(rng_normal, sigma_min: float, sigma_max: float,
                           mean: float = -1.2, std: float = 1.2):
    """Log-normal training noise levels, clipped into the schedule range.

    `rng_normal` is a draw of standard normals (numpy array or torch tensor);
    the caller owns the random stream so training stays seed-deterministic.
    """
    import numpy as _np

    if hasattr(rng_normal, "clamp"):  # torch tensor
        return (mean + std * rng_normal).exp().clamp(sigma_min, sigma_max)
    return _np.clip(_np.exp(mean + std * _np.asarray(rng_normal)), sigma_min, sigma_max)
