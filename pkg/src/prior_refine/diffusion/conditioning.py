"""Condition assembly and the preconditioned denoiser wrapper.

`denoise` is the only entry point the trainer and sampler use: it wraps the
raw network F with the c_in/c_skip/c_out scalings and applies classifier-free
guidance when guidance_scale != 1 (a second, fully dropped pass).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import InvalidArgumentError
from .schedule import precondition


@dataclass
class ConditionBundle:
    """Per-batch conditioning: signal (B, l), optional prior (B, 1, T, H, W),
    optional mask (B, 1, H, W) broadcast across frames."""

    signal: torch.Tensor
    prior: torch.Tensor | None = None
    mask: torch.Tensor | None = None


def assemble_condition(noisy: torch.Tensor, prior=None, mask=None) -> torch.Tensor:
    """Stack input channels in the fixed order [noisy, prior, mask]."""
    if noisy.ndim != 5:
        raise InvalidArgumentError(f"noisy field must be (B, 1, T, H, W), got {tuple(noisy.shape)}")
    chans = [noisy]
    if prior is not None:
        if prior.shape != noisy.shape:
            raise InvalidArgumentError(
                f"prior shape {tuple(prior.shape)} != noisy shape {tuple(noisy.shape)}"
            )
        chans.append(prior)
    if mask is not None:
        if mask.ndim == 4:  # (B, 1, H, W) -> broadcast over T
            mask = mask[:, :, None, :, :].expand(-1, -1, noisy.shape[2], -1, -1)
        if mask.shape != noisy.shape:
            raise InvalidArgumentError(
                f"mask shape {tuple(mask.shape)} incompatible with noisy {tuple(noisy.shape)}"
            )
        chans.append(mask)
    return torch.cat(chans, dim=1)


def _one_pass(model, x_t, sigma, cond: ConditionBundle, drop):
    pre = precondition(float(sigma), model.sigma_data)
    c_noise = torch.full((x_t.shape[0],), pre.c_noise, dtype=x_t.dtype, device=x_t.device)
    f_out = model.net(
        pre.c_in * x_t, c_noise, cond.signal, prior=cond.prior, mask=cond.mask, drop=drop
    )
    return pre.c_skip * x_t + pre.c_out * f_out


def denoise(model, x_t: torch.Tensor, sigma: float, cond: ConditionBundle,
            guidance_scale: float = 1.0) -> torch.Tensor:
    """x0 estimate at noise level sigma; CFG extrapolation when scale != 1."""
    x_hat = _one_pass(model, x_t, sigma, cond, drop=None)
    if guidance_scale == 1.0:
        return x_hat
    drop_all = torch.ones(x_t.shape[0], dtype=torch.bool, device=x_t.device)
    x_unc = _one_pass(model, x_t, sigma, cond, drop=drop_all)
    return x_unc + guidance_scale * (x_hat - x_unc)
