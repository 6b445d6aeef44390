"""Compact video denoiser: depth-configurable encoder-decoder 3D U-Net in
pixel space with spatio-temporal convolutions, factored attention at the
coarsest levels, and FiLM conditioning at every residual block.

The network computes the raw prediction F; the c_skip/c_out wrapping lives in
`conditioning.denoise`. The final convolution is zero-initialized, so at init
F == 0 and the preconditioned denoiser is exactly c_skip * x_t. FiLM
projections are zero-initialized too, making the initial modulation the
identity for any signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from ..errors import InvalidArgumentError


@dataclass
class DenoiserConfig:
    signal_len: int = 101
    base_channels: int = 16
    channel_mults: tuple = (1, 2, 3, 4)
    cond_dim: int = 96
    use_prior: bool = True
    use_mask: bool = False
    attn_levels: tuple | None = None  # default: two coarsest
    head_dim: int = 16

    def __post_init__(self):
        self.channel_mults = tuple(self.channel_mults)
        if len(self.channel_mults) < 2:
            raise InvalidArgumentError("need at least 2 resolution levels")
        if self.attn_levels is None:
            n = len(self.channel_mults)
            self.attn_levels = (n - 2, n - 1)
        self.attn_levels = tuple(self.attn_levels)

    @property
    def in_channels(self) -> int:
        return 1 + int(self.use_prior) + int(self.use_mask)

    def to_dict(self):
        return {
            "signal_len": self.signal_len,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "cond_dim": self.cond_dim,
            "use_prior": self.use_prior,
            "use_mask": self.use_mask,
            "attn_levels": list(self.attn_levels),
            "head_dim": self.head_dim,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        d["attn_levels"] = tuple(d["attn_levels"])
        return cls(**d)


def zero_module(m: nn.Module) -> nn.Module:
    for p in m.parameters():
        nn.init.zeros_(p)
    return m


def _norm(channels: int) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


class FourierEmb(nn.Module):
    """Fixed log-spaced Fourier features of the (scalar) noise coordinate."""

    def __init__(self, n_freqs: int = 16):
        super().__init__()
        self.register_buffer("freqs", torch.logspace(math.log10(0.25), math.log10(64.0), n_freqs))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        ang = 2 * math.pi * x[:, None] * self.freqs[None, :]
        return torch.cat([ang.cos(), ang.sin()], dim=-1)


class Film(nn.Module):
    """Per-block channel-wise (scale, shift) from the conditioning code."""

    def __init__(self, cond_dim: int, channels: int):
        super().__init__()
        self.proj = zero_module(nn.Linear(cond_dim, 2 * channels))

    def forward(self, emb: torch.Tensor):
        scale, shift = self.proj(emb).chunk(2, dim=-1)
        return scale, shift


class ResBlock3d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, cond_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv3d(in_ch, out_ch, 3, padding=1)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv3d(out_ch, out_ch, 3, padding=1)
        self.film = Film(cond_dim, out_ch)
        self.skip = nn.Conv3d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.film(emb)
        h = self.norm2(h) * (1 + scale[:, :, None, None, None]) + shift[:, :, None, None, None]
        h = self.conv2(F.silu(h))
        return h + self.skip(x)


class FactoredAttention(nn.Module):
    """Spatial self-attention per frame, then temporal per pixel."""

    def __init__(self, channels: int, head_dim: int = 16):
        super().__init__()
        self.heads = max(1, channels // head_dim)
        self.norm_s = _norm(channels)
        self.qkv_s = nn.Conv1d(channels, 3 * channels, 1)
        self.proj_s = zero_module(nn.Conv1d(channels, channels, 1))
        self.norm_t = _norm(channels)
        self.qkv_t = nn.Conv1d(channels, 3 * channels, 1)
        self.proj_t = zero_module(nn.Conv1d(channels, channels, 1))

    def _attend(self, x_tokens, qkv, proj):
        # x_tokens: (B*, C, N)
        q, k, v = qkv(x_tokens).chunk(3, dim=1)
        q, k, v = (rearrange(z, "b (h d) n -> b h n d", h=self.heads) for z in (q, k, v))
        out = F.scaled_dot_product_attention(q, k, v)
        return proj(rearrange(out, "b h n d -> b (h d) n"))

    def forward(self, x):
        b, c, t, hh, ww = x.shape
        h = rearrange(self.norm_s(x), "b c t h w -> (b t) c (h w)")
        h = self._attend(h, self.qkv_s, self.proj_s)
        x = x + rearrange(h, "(b t) c (h w) -> b c t h w", b=b, h=hh)
        h = rearrange(self.norm_t(x), "b c t h w -> (b h w) c t")
        h = self._attend(h, self.qkv_t, self.proj_t)
        return x + rearrange(h, "(b h w) c t -> b c t h w", b=b, h=hh)


class Downsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv3d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv3d(channels, channels, 3, padding=1)

    def forward(self, x, target_shape):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = x[:, :, : target_shape[0], : target_shape[1], : target_shape[2]]
        return self.conv(x)


class VideoDenoiser(nn.Module):
    """Raw network F(c_in*x_t ++ prior ++ mask; c_noise, FiLM(signal))."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cd = config.cond_dim

        self.noise_emb = nn.Sequential(FourierEmb(), nn.Linear(32, cd), nn.SiLU(), nn.Linear(cd, cd))
        # the FiLM latent path: two linear layers with SiLU between
        self.signal_emb = nn.Sequential(nn.Linear(config.signal_len, cd), nn.SiLU(), nn.Linear(cd, cd))
        self.null_signal = nn.Parameter(torch.zeros(cd))
        self.null_prior = nn.Parameter(torch.zeros(1))

        chans = [config.base_channels * m for m in config.channel_mults]
        self.stem = nn.Conv3d(config.in_channels, chans[0], 3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.enc_attn = nn.ModuleList()
        self.downs = nn.ModuleList()
        for lvl, ch in enumerate(chans):
            in_ch = chans[max(lvl - 1, 0)]
            self.enc_blocks.append(ResBlock3d(in_ch, ch, cd))
            self.enc_attn.append(
                FactoredAttention(ch, config.head_dim) if lvl in config.attn_levels else nn.Identity()
            )
            self.downs.append(Downsample(ch) if lvl < len(chans) - 1 else nn.Identity())

        self.mid1 = ResBlock3d(chans[-1], chans[-1], cd)
        self.mid_attn = FactoredAttention(chans[-1], config.head_dim)
        self.mid2 = ResBlock3d(chans[-1], chans[-1], cd)

        self.ups = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        self.dec_attn = nn.ModuleList()
        for lvl in reversed(range(len(chans))):
            ch = chans[lvl]
            self.ups.append(Upsample(chans[min(lvl + 1, len(chans) - 1)]) if lvl < len(chans) - 1 else nn.Identity())
            in_ch = ch + chans[min(lvl + 1, len(chans) - 1)] if lvl < len(chans) - 1 else ch
            self.dec_blocks.append(ResBlock3d(in_ch, ch, cd))
            self.dec_attn.append(
                FactoredAttention(ch, config.head_dim) if lvl in config.attn_levels else nn.Identity()
            )

        self.out_norm = _norm(chans[0])
        self.out_conv = zero_module(nn.Conv3d(chans[0], 1, 3, padding=1))

    def embed_signal(self, signal: torch.Tensor) -> torch.Tensor:
        if signal.shape[-1] != self.config.signal_len:
            raise InvalidArgumentError(
                f"signal length {signal.shape[-1]} != trained length {self.config.signal_len}"
            )
        return self.signal_emb(signal)

    def film_codes(self, signal: torch.Tensor):
        """(scale, shift) per residual block for the signal pathway alone;
        inspection hook used by the conditioning tests."""
        emb = self.embed_signal(signal)
        blocks = list(self.enc_blocks) + [self.mid1, self.mid2] + list(self.dec_blocks)
        return [blk.film(emb) for blk in blocks]

    def forward(self, noisy, c_noise, signal, prior=None, mask=None, drop=None):
        from .conditioning import assemble_condition

        b = noisy.shape[0]
        if self.config.use_prior and prior is None:
            raise InvalidArgumentError("model was trained with a prior channel; none supplied")
        if self.config.use_mask and mask is None:
            raise InvalidArgumentError("model was trained with a mask channel; none supplied")

        emb = self.noise_emb(c_noise) + self.embed_signal(signal)
        if drop is not None and drop.any():
            emb = torch.where(drop[:, None], self.noise_emb(c_noise) + self.null_signal[None, :], emb)
            if self.config.use_prior:
                null = self.null_prior.expand_as(prior)
                prior = torch.where(drop[:, None, None, None, None], null, prior)

        x = assemble_condition(
            noisy,
            prior if self.config.use_prior else None,
            mask if self.config.use_mask else None,
        )
        x = self.stem(x)

        skips = []
        for block, attn, down in zip(self.enc_blocks, self.enc_attn, self.downs):
            x = attn(block(x, emb))
            skips.append(x)
            x = down(x)

        x = self.mid2(self.mid_attn(self.mid1(x, emb)), emb)

        for up, block, attn in zip(self.ups, self.dec_blocks, self.dec_attn):
            skip = skips.pop()
            if not isinstance(up, nn.Identity):
                x = up(x, skip.shape[2:])
                x = torch.cat([x, skip], dim=1)
            x = attn(block(x, emb))

        return self.out_conv(F.silu(self.out_norm(x)))
