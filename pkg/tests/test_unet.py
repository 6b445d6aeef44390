"""Denoiser network: initialization identities, FiLM wiring, channel checks."""

import pytest
import torch

from prior_refine.diffusion import (
    ConditionBundle,
    DenoiserConfig,
    NoiseSchedule,
    VideoDenoiser,
    assemble_condition,
    denoise,
)
from prior_refine.diffusion.training import Denoiser, DiffusionTrainConfig
from prior_refine.errors import InvalidArgumentError
from prior_refine.operator import FieldNormalizer

TINY = DenoiserConfig(signal_len=17, base_channels=8, channel_mults=(1, 2), cond_dim=16, head_dim=8)


def _tiny_model(config=TINY) -> Denoiser:
    torch.manual_seed(0)
    net = VideoDenoiser(config)
    return Denoiser(net, NoiseSchedule(n_steps=8), FieldNormalizer(-1.0, 1.0), "full",
                    train_config=DiffusionTrainConfig())


def test_zero_init_makes_denoiser_the_skip_path():
    model = _tiny_model()
    x = torch.randn(2, 1, 3, 8, 8, generator=torch.Generator().manual_seed(1))
    prior = torch.randn_like(x)
    cond = ConditionBundle(signal=torch.randn(2, 17), prior=prior)
    sigma = 1.7
    out = denoise(model, x, sigma, cond)
    sd = model.sigma_data
    c_skip = sd**2 / (sigma**2 + sd**2)
    torch.testing.assert_close(out, c_skip * x, atol=1e-6, rtol=0)


def test_film_codes_zero_at_init_and_live_after():
    net = VideoDenoiser(TINY)
    sig = torch.randn(3, 17)
    codes = net.film_codes(sig)
    # enc(2) + mid(2) + dec(2) residual blocks
    assert len(codes) == 6
    for scale, shift in codes:
        assert torch.count_nonzero(scale) == 0
        assert torch.count_nonzero(shift) == 0
    with torch.no_grad():
        for blk in net.enc_blocks:
            blk.film.proj.weight.normal_()
    codes = net.film_codes(sig)
    assert torch.count_nonzero(codes[0][0]) > 0
    # and the codes respond to the signal
    other = net.film_codes(sig + 1.0)
    assert not torch.equal(codes[0][0], other[0][0])


def test_guidance_scale_one_is_single_pass_identity():
    model = _tiny_model()
    with torch.no_grad():  # make the net nontrivial so the check means something
        model.net.out_conv.weight.normal_(std=0.02)
        for blk in model.net.enc_blocks:
            blk.film.proj.weight.normal_(std=0.02)
    x = torch.randn(2, 1, 3, 8, 8, generator=torch.Generator().manual_seed(2))
    cond = ConditionBundle(signal=torch.randn(2, 17), prior=torch.zeros_like(x))
    a = denoise(model, x, 0.9, cond, guidance_scale=1.0)
    b = denoise(model, x, 0.9, cond, guidance_scale=1.0)
    assert torch.equal(a, b)


def test_guidance_extrapolates_between_passes():
    model = _tiny_model()
    with torch.no_grad():
        model.net.out_conv.weight.normal_(std=0.1)
        model.net.null_signal.normal_()
        for blk in model.net.enc_blocks:
            blk.film.proj.weight.normal_(std=0.1)
    x = torch.randn(1, 1, 3, 8, 8, generator=torch.Generator().manual_seed(3))
    cond = ConditionBundle(signal=torch.randn(1, 17), prior=torch.zeros_like(x))
    cond_hat = denoise(model, x, 0.9, cond, guidance_scale=1.0)
    unc_plus_two = denoise(model, x, 0.9, cond, guidance_scale=2.0)
    # gs=2: x_unc + 2 (x_cond - x_unc) -> reflect x_cond past x_unc
    x_unc = 2 * cond_hat - unc_plus_two
    gs3 = denoise(model, x, 0.9, cond, guidance_scale=3.0)
    torch.testing.assert_close(gs3, x_unc + 3 * (cond_hat - x_unc), atol=1e-5, rtol=1e-5)


def test_dropout_replaces_conditioning():
    model = _tiny_model()
    with torch.no_grad():
        model.net.out_conv.weight.normal_(std=0.1)
        model.net.null_signal.normal_()
        for blk in model.net.enc_blocks:
            blk.film.proj.weight.normal_(std=0.1)
    net = model.net
    x = torch.randn(2, 1, 3, 8, 8)
    sig = torch.randn(2, 17)
    prior = torch.randn_like(x)
    c_noise = torch.zeros(2)
    kept = net(x, c_noise, sig, prior=prior)
    dropped = net(x, c_noise, sig, prior=prior, drop=torch.tensor([True, True]))
    assert not torch.equal(kept, dropped)
    # drop erases the input identity: any signal/prior gives the same output
    dropped2 = net(x, c_noise, sig + 5, prior=prior * -3, drop=torch.tensor([True, True]))
    torch.testing.assert_close(dropped, dropped2, atol=1e-6, rtol=0)


def test_missing_channels_rejected():
    net = VideoDenoiser(TINY)  # use_prior defaults True
    x = torch.randn(1, 1, 2, 8, 8)
    with pytest.raises(InvalidArgumentError):
        net(x, torch.zeros(1), torch.randn(1, 17))


def test_wrong_signal_length_rejected():
    net = VideoDenoiser(TINY)
    x = torch.randn(1, 1, 2, 8, 8)
    with pytest.raises(InvalidArgumentError):
        net(x, torch.zeros(1), torch.randn(1, 23), prior=torch.zeros_like(x))


def test_odd_spatial_sizes_survive_the_down_up_path():
    cfg = DenoiserConfig(signal_len=9, base_channels=8, channel_mults=(1, 2), cond_dim=16, head_dim=8)
    net = VideoDenoiser(cfg)
    x = torch.randn(1, 1, 3, 10, 6)
    out = net(x, torch.zeros(1), torch.randn(1, 9), prior=torch.zeros_like(x))
    assert out.shape == x.shape


def test_assemble_condition_channel_order():
    noisy = torch.full((1, 1, 2, 3, 3), 1.0)
    prior = torch.full((1, 1, 2, 3, 3), 2.0)
    mask = torch.full((1, 1, 3, 3), 3.0)
    out = assemble_condition(noisy, prior, mask)
    assert out.shape == (1, 3, 2, 3, 3)
    assert out[0, 0].unique().item() == 1.0
    assert out[0, 1].unique().item() == 2.0
    assert out[0, 2].unique().item() == 3.0  # (B,1,H,W) broadcast over frames


def test_assemble_condition_shape_errors():
    noisy = torch.zeros(1, 1, 2, 3, 3)
    with pytest.raises(InvalidArgumentError):
        assemble_condition(torch.zeros(1, 1, 3, 3))
    with pytest.raises(InvalidArgumentError):
        assemble_condition(noisy, prior=torch.zeros(1, 1, 2, 3, 4))
    with pytest.raises(InvalidArgumentError):
        assemble_condition(noisy, mask=torch.zeros(1, 1, 4, 4))


def test_config_channel_arithmetic():
    assert DenoiserConfig(signal_len=9, use_prior=True, use_mask=True).in_channels == 3
    assert DenoiserConfig(signal_len=9, use_prior=True, use_mask=False).in_channels == 2
    assert DenoiserConfig(signal_len=9, use_prior=False, use_mask=False).in_channels == 1
    cfg = DenoiserConfig(signal_len=9, channel_mults=(1, 2, 3))
    assert cfg.attn_levels == (1, 2)  # two coarsest levels by default


def test_config_round_trip():
    cfg = DenoiserConfig(signal_len=33, base_channels=12, channel_mults=(1, 2, 4),
                         cond_dim=24, use_prior=False, use_mask=True, head_dim=12)
    assert DenoiserConfig.from_dict(cfg.to_dict()) == cfg


def test_double_precision_forward():
    # the finite-difference gradient check needs float64 end to end
    net = VideoDenoiser(TINY).double()
    x = torch.randn(1, 1, 2, 8, 8, dtype=torch.float64)
    out = net(x, torch.zeros(1, dtype=torch.float64), torch.randn(1, 17, dtype=torch.float64),
              prior=torch.zeros_like(x))
    assert out.dtype == torch.float64
