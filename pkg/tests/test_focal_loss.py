"""Time-wise focal reweighting of the per-element squared error."""

import pytest
import torch

from prior_refine.diffusion import timewise_focal_loss
from prior_refine.errors import InvalidArgumentError


def _brute_force(err: torch.Tensor, xi: float = 2.0, eps: float = 1e-8) -> float:
    """Literal nested-loop transcription of the definition."""
    b, c, t, h, w = err.shape
    l_t = []
    for k in range(t):
        acc = 0.0
        for bi in range(b):
            frame = err[bi, :, k]
            acc += frame.sum().item() / (c * h * w)
        l_t.append(acc / b)
    l_bar = sum(l_t) / t
    w_t = [(lk / (l_bar + eps)) ** xi for lk in l_t]
    num = sum(wk * lk for wk, lk in zip(w_t, l_t))
    return num / (sum(w_t) + eps)


def test_hand_example():
    # two frames with per-time means 1 and 3: weights (1/4, 9/4),
    # loss = (1*1/4 + 3*9/4) / (10/4) = 2.8
    err = torch.zeros(1, 1, 2, 2, 2)
    err[0, 0, 0] = 1.0
    err[0, 0, 1] = 3.0
    assert timewise_focal_loss(err).item() == pytest.approx(2.8, abs=1e-6)


def test_uniform_error_reduces_to_mean():
    err = torch.full((3, 2, 5, 4, 4), 0.7)
    assert timewise_focal_loss(err).item() == pytest.approx(0.7, rel=1e-6)


def test_matches_brute_force_on_random_tensors():
    g = torch.Generator().manual_seed(7)
    for _ in range(25):
        err = torch.rand(2, 1, 4, 3, 3, generator=g, dtype=torch.float64) * 2
        got = timewise_focal_loss(err).item()
        want = _brute_force(err)
        assert got == pytest.approx(want, abs=1e-9)


def test_focal_upweights_hard_times():
    # sum l^3 / sum l^2 >= mean(l): the focal value dominates the flat mean
    g = torch.Generator().manual_seed(1)
    for _ in range(10):
        err = torch.rand(2, 1, 6, 3, 3, generator=g, dtype=torch.float64)
        focal = timewise_focal_loss(err).item()
        flat = err.mean().item()
        assert focal >= flat - 1e-12


def test_gradient_flows_through_weights():
    err = torch.rand(1, 1, 3, 2, 2, dtype=torch.float64, requires_grad=True)
    loss = timewise_focal_loss(err)
    loss.backward()
    assert err.grad is not None
    assert torch.isfinite(err.grad).all()
    assert err.grad.abs().sum() > 0


def test_rejects_wrong_rank():
    with pytest.raises(InvalidArgumentError):
        timewise_focal_loss(torch.zeros(2, 3, 4, 4))
