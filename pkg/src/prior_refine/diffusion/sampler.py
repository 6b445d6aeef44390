"""Second-order Heun sampler with optional stochastic churn.

The sampler integrates dx/dsigma = (x - D(x, sigma)) / sigma from sigma_max
down to 0 on the rho-warped grid. churn > 0 temporarily inflates the noise
level between deterministic steps; churn = 0 makes the trajectory a pure
function of the seed.
"""

from __future__ import annotations

import math

import torch

from ..errors import InvalidArgumentError, SamplingDivergedError
from .schedule import NoiseSchedule, sigmas

_MAX_GAMMA = math.sqrt(2.0) - 1.0


def heun_sample(denoise_fn, shape, schedule: NoiseSchedule, churn: float = 0.0,
                seed: int = 0, clamp: tuple | None = (-1.0, 1.0),
                generator: torch.Generator | None = None,
                x_init: torch.Tensor | None = None) -> torch.Tensor:
    """Draw one batch of videos from a denoiser-defined distribution.

    denoise_fn(x, sigma) -> x0 estimate. `clamp` bounds the final output to
    the model's normalized range; pass None for unbounded targets (residual
    sampling, analytic oracles). `x_init` overrides the sigma_0-scaled
    starting state (already multiplied by sigma_0), which lets callers pin
    per-case noise independent of batch composition.
    """
    if generator is None:
        generator = torch.Generator().manual_seed(seed)
    sig = sigmas(schedule)
    if x_init is not None:
        if tuple(x_init.shape) != tuple(shape):
            raise InvalidArgumentError(f"x_init shape {tuple(x_init.shape)} != {tuple(shape)}")
        x = x_init.clone()
    else:
        x = sig[0] * torch.randn(shape, generator=generator, dtype=torch.float32)

    for i in range(schedule.n_steps):
        sigma_i, sigma_next = float(sig[i]), float(sig[i + 1])
        gamma = min(churn, _MAX_GAMMA) if churn > 0 else 0.0
        sigma_hat = sigma_i * (1 + gamma)
        if gamma > 0:
            bump = torch.randn(shape, generator=generator, dtype=torch.float32)
            x = x + math.sqrt(sigma_hat**2 - sigma_i**2) * bump

        x0 = denoise_fn(x, sigma_hat)
        d = (x - x0) / sigma_hat
        x_next = x + (sigma_next - sigma_hat) * d
        if sigma_next > 0:
            x0_2 = denoise_fn(x_next, sigma_next)
            d_prime = (x_next - x0_2) / sigma_next
            x_next = x + (sigma_next - sigma_hat) * 0.5 * (d + d_prime)
        if not torch.isfinite(x_next).all():
            raise SamplingDivergedError(i, f"non-finite sampler state after step {i} "
                                           f"(sigma {sigma_hat:.4g} -> {sigma_next:.4g})")
        x = x_next

    if clamp is not None:
        x = x.clamp(clamp[0], clamp[1])
    return x
