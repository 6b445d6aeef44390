from .conditioning import ConditionBundle, assemble_condition, denoise
from .loss import timewise_focal_loss
from .sampler import heun_sample
from .schedule import (
    NoiseSchedule,
    Preconditioners,
    corrupt,
    edm_weight,
    precondition,
    precondition_batch,
    sample_training_sigmas,
    sigma_schedule,
    sigmas,
)
from .training import (
    Denoiser,
    case_noise_seed,
    DiffusionTrainConfig,
    load_diffusion,
    sample_videos,
    save_diffusion,
    train_diffusion,
    training_loss,
)
from .unet import DenoiserConfig, VideoDenoiser

__all__ = [
    "ConditionBundle",
    "Denoiser",
    "DenoiserConfig",
    "DiffusionTrainConfig",
    "NoiseSchedule",
    "Preconditioners",
    "VideoDenoiser",
    "assemble_condition",
    "case_noise_seed",
    "corrupt",
    "denoise",
    "edm_weight",
    "heun_sample",
    "load_diffusion",
    "precondition",
    "precondition_batch",
    "sample_training_sigmas",
    "sample_videos",
    "save_diffusion",
    "sigma_schedule",
    "sigmas",
    "timewise_focal_loss",
    "train_diffusion",
    "training_loss",
]
