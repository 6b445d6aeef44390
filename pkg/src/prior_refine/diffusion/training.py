"""Diffusion training loop, the model wrapper, and batched sampling.

The trainer draws log-normal noise levels, corrupts the (possibly
residual-normalized) target, pushes the squared error through the elucidated
sigma-weighting and then the time-wise focal reduction. Condition dropout
with probability p_uncond trains the unconditional branch used by
classifier-free guidance. Everything is a deterministic function of the seed
(single-threaded CPU semantics).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .. import ckpt, targets
from ..errors import InvalidArgumentError, TrainingDivergedError
from ..operator import FieldNormalizer
from .conditioning import ConditionBundle, denoise
from .loss import FOCAL_EPS, FOCAL_XI, timewise_focal_loss
from .sampler import heun_sample
from .schedule import NoiseSchedule, edm_weight, precondition_batch, sample_training_sigmas
from .unet import DenoiserConfig, VideoDenoiser

log = logging.getLogger(__name__)

TARGET_MODES = ("full", "residual")


@dataclass
class DiffusionTrainConfig:
    steps: int = 1500
    batch_size: int = 4
    lr: float = 2e-4
    p_uncond: float = 0.1
    guidance_scale: float = 1.5
    sigma_mean: float = -1.2
    sigma_std: float = 1.2
    grad_clip: float = 1.0

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "steps", "batch_size", "lr", "p_uncond", "guidance_scale",
            "sigma_mean", "sigma_std", "grad_clip")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Denoiser:
    """Frozen bundle of network + schedule + normalization for inference."""

    def __init__(self, net: VideoDenoiser, schedule: NoiseSchedule,
                 normalizer: FieldNormalizer, target_mode: str,
                 scaler: targets.ResidualScaler | None = None,
                 train_config: DiffusionTrainConfig | None = None):
        if target_mode not in TARGET_MODES:
            raise InvalidArgumentError(f"target_mode must be one of {TARGET_MODES}")
        if target_mode == "residual" and scaler is None:
            raise InvalidArgumentError("residual mode requires a fitted ResidualScaler")
        self.net = net
        self.schedule = schedule
        self.normalizer = normalizer
        self.target_mode = target_mode
        self.scaler = scaler
        self.train_config = train_config or DiffusionTrainConfig()

    @property
    def sigma_data(self) -> float:
        return self.schedule.sigma_data


def training_loss(net: VideoDenoiser, sigma_data: float, x0: torch.Tensor,
                  cond: ConditionBundle, sigma: torch.Tensor, eps: torch.Tensor,
                  drop: torch.Tensor | None = None, xi: float = FOCAL_XI,
                  eps_focal: float = FOCAL_EPS) -> torch.Tensor:
    """Full per-batch objective: EDM-weighted squared error, focal-reduced.

    x0 (B,1,T,H,W) is the normalized target, sigma (B,) the per-sample noise
    levels, eps the standard normal draw. Pure function of its inputs; the
    finite-difference gradient check drives exactly this code path.
    """
    bshape = (-1,) + (1,) * (x0.ndim - 1)
    sig = sigma.reshape(bshape)
    x_t = x0 + sig * eps
    c_in, c_skip, c_out, c_noise = precondition_batch(sigma, sigma_data)
    f_out = net(c_in.reshape(bshape) * x_t, c_noise, cond.signal,
                prior=cond.prior, mask=cond.mask, drop=drop)
    x_hat = c_skip.reshape(bshape) * x_t + c_out.reshape(bshape) * f_out
    weight = edm_weight(sigma, sigma_data).reshape(bshape)
    return timewise_focal_loss(weight * (x_hat - x0) ** 2, xi=xi, eps=eps_focal)


def _prepare_tensors(dataset, priors, target_mode, use_prior, train_only=True):
    """Stack the train split into torch tensors in normalized units."""
    train_idx, _ = dataset.split()
    cases = dataset.subset(train_idx)
    gt = np.stack([c.field.data for c in cases])
    normalizer = FieldNormalizer.fit([gt])
    signals = torch.from_numpy(np.stack([c.signal.values for c in cases])).float()

    prior_stack = None
    if use_prior:
        if priors is None:
            raise InvalidArgumentError("this variant conditions on priors; none supplied")
        prior_stack = np.stack([priors[c.case_id].data for c in cases])

    scaler = None
    if target_mode == "residual":
        residuals = gt - prior_stack
        scaler = targets.fit_scaler([residuals])
        target = targets.normalize(residuals, scaler)
    else:
        target = normalizer.normalize(gt)

    x0 = torch.from_numpy(target).float()[:, None]  # (N,1,T,H,W)
    prior_t = None
    if use_prior:
        prior_t = torch.from_numpy(normalizer.normalize(prior_stack)).float()[:, None]
    mask_t = None
    if cases[0].mask is not None:
        mask_t = torch.from_numpy(
            np.stack([c.mask.data for c in cases]).astype(np.float32)
        )[:, None]  # (N,1,H,W)
    return x0, signals, prior_t, mask_t, normalizer, scaler


def train_diffusion(dataset, priors, target_mode: str, arch: DenoiserConfig,
                    schedule: NoiseSchedule, config: DiffusionTrainConfig,
                    seed: int = 0):
    """Returns (Denoiser, loss log). Variant selection is implicit:
    arch.use_prior=False + full -> no-prior model; use_prior + full -> direct
    full-field; use_prior + residual -> residual corrector."""
    if target_mode not in TARGET_MODES:
        raise InvalidArgumentError(f"target_mode must be one of {TARGET_MODES}")
    if target_mode == "residual" and not arch.use_prior:
        raise InvalidArgumentError("residual targets only make sense with a prior channel")

    x0, signals, prior_t, mask_t, normalizer, scaler = _prepare_tensors(
        dataset, priors, target_mode, arch.use_prior
    )
    n_train = x0.shape[0]

    torch.manual_seed(seed)
    net = VideoDenoiser(arch)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.steps)
    gen = torch.Generator().manual_seed(seed)

    history = []
    for step in range(config.steps):
        ix = torch.randint(n_train, (config.batch_size,), generator=gen)
        batch_x0 = x0[ix]
        cond = ConditionBundle(
            signal=signals[ix],
            prior=prior_t[ix] if prior_t is not None else None,
            mask=mask_t[ix] if mask_t is not None else None,
        )
        normals = torch.randn(config.batch_size, generator=gen)
        sigma = sample_training_sigmas(normals, schedule.sigma_min, schedule.sigma_max,
                                       mean=config.sigma_mean, std=config.sigma_std)
        eps = torch.randn(batch_x0.shape, generator=gen)
        drop = torch.rand(config.batch_size, generator=gen) < config.p_uncond

        loss = training_loss(net, schedule.sigma_data, batch_x0, cond, sigma, eps, drop=drop)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"diffusion loss non-finite at step {step}, "
                f"sigma batch [{float(sigma.min()):.4g}, {float(sigma.max()):.4g}]"
            )
        opt.zero_grad()
        loss.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        opt.step()
        sched.step()
        history.append(float(loss.detach()))
        if step % 100 == 0 or step == config.steps - 1:
            log.info("diffusion step %d/%d loss %.5f", step, config.steps, history[-1])

    net.eval()
    model = Denoiser(net, schedule, normalizer, target_mode, scaler=scaler, train_config=config)
    return model, history


def case_noise_seed(base_seed: int, case_index: int) -> int:
    """Stable per-case sampling seed, independent of batch composition."""
    return int(np.random.SeedSequence([base_seed, case_index]).generate_state(1)[0])


def sample_videos(model: Denoiser, signals: np.ndarray, priors: np.ndarray | None,
                  masks: np.ndarray | None, case_indices, base_seed: int = 0,
                  guidance_scale: float | None = None, churn: float = 0.0,
                  batch_size: int = 8, video_shape: tuple | None = None) -> np.ndarray:
    """Sample one video per case and undo the normalization.

    Per-case initial noise comes from `case_noise_seed`, so results do not
    depend on how cases are batched (churn=0; churn>0 would consume shared
    draws). Residual-mode outputs are reconstructed against the prior. The
    returned array is in raw field units, (N, T, H, W). `video_shape`
    (T, H, W) is required when the model is unconditional on priors, since
    nothing else pins the frame count.
    """
    gs = model.train_config.guidance_scale if guidance_scale is None else guidance_scale
    net_cfg = model.net.config
    if net_cfg.use_prior and priors is None:
        raise InvalidArgumentError("model conditions on priors; none supplied")
    if net_cfg.use_mask and masks is None:
        raise InvalidArgumentError("model conditions on masks; none supplied")
    if priors is None and video_shape is None:
        raise InvalidArgumentError("video_shape (T, H, W) required without priors")

    n = signals.shape[0]
    t_frames, height, width = priors.shape[1:] if priors is not None else video_shape
    out = []
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        sig_t = torch.from_numpy(signals[sl]).float()
        prior_raw = priors[sl] if priors is not None else None
        prior_t = None
        if net_cfg.use_prior:
            prior_t = torch.from_numpy(model.normalizer.normalize(prior_raw)).float()[:, None]
        mask_t = None
        if net_cfg.use_mask:
            mask_t = torch.from_numpy(masks[sl].astype(np.float32))[:, None]
        cond = ConditionBundle(signal=sig_t, prior=prior_t, mask=mask_t)

        b = sig_t.shape[0]
        shape = (b, 1, t_frames, height, width)

        eps = torch.stack([
            torch.randn(shape[1:], generator=torch.Generator().manual_seed(
                case_noise_seed(base_seed, int(ci))))
            for ci in case_indices[sl]
        ])
        from .schedule import sigmas as _sigmas
        x_init = float(_sigmas(model.schedule)[0]) * eps

        def denoise_fn(x, sigma):
            with torch.no_grad():
                return denoise(model, x, sigma, cond, guidance_scale=gs)

        clamp = (-1.0, 1.0) if model.target_mode == "full" else None
        sample = heun_sample(denoise_fn, shape, model.schedule, churn=churn,
                             seed=base_seed, clamp=clamp, x_init=x_init)
        sample_np = sample[:, 0].numpy().astype(np.float64)

        if model.target_mode == "residual":
            recon = targets.reconstruct(sample_np, prior_raw, model.scaler)
        else:
            recon = model.normalizer.denormalize(sample_np)
        out.append(recon)
    return np.concatenate(out, axis=0)


def save_diffusion(prefix, model: Denoiser, history, seed: int,
                   lineage: dict | None = None) -> None:
    body = {
        "arch": model.net.config.to_dict(),
        "schedule": model.schedule.to_dict(),
        "normalizer": model.normalizer.to_dict(),
        "target_mode": model.target_mode,
        "scaler": model.scaler.to_dict() if model.scaler else None,
        "train_config": model.train_config.to_dict(),
        "seed": seed,
        "loss_history": [float(v) for v in history],
        "lineage": lineage or {},
    }
    ckpt.save_model_checkpoint(prefix, "diffusion", body, model.net.state_dict())


def load_diffusion(prefix) -> tuple[Denoiser, dict]:
    man, state = ckpt.load_model_checkpoint(prefix, "diffusion")
    net = VideoDenoiser(DenoiserConfig.from_dict(man["arch"]))
    net.load_state_dict(state)
    net.eval()
    scaler = targets.ResidualScaler.from_dict(man["scaler"]) if man.get("scaler") else None
    model = Denoiser(
        net,
        NoiseSchedule.from_dict(man["schedule"]),
        FieldNormalizer.from_dict(man["normalizer"]),
        man["target_mode"],
        scaler=scaler,
        train_config=DiffusionTrainConfig.from_dict(man["train_config"]),
    )
    return model, man
