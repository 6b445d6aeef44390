"""Operator network: einsum correctness, defaults, training determinism,
prior export round trip."""

import numpy as np
import pytest
import torch

from prior_refine.datagen import generate_dataset
from prior_refine.errors import InvalidArgumentError
from prior_refine.operator import (
    FieldNormalizer,
    OperatorConfig,
    SDeepONet,
    export_priors,
    grid_coords,
    load_operator,
    load_priors,
    persist_priors,
    save_operator,
    sdon_forward,
    train_operator,
)

SMALL = OperatorConfig(hidden_dim=12, gru_layers=1, trunk_layers=3, trunk_width=16,
                       epochs=2, cases_per_batch=2, coords_per_case=32)


@pytest.fixture(scope="module")
def tiny_cavity():
    return generate_dataset("cavity", n_cases=5, grid=16, frames=3, l=17, seed=6, split_seed=0)


def test_default_architecture_dimensions():
    cfg = OperatorConfig()
    assert cfg.hidden_dim == 200
    assert cfg.gru_layers == 4
    assert cfg.trunk_layers == 6
    model = SDeepONet(cfg, signal_len=101)
    assert model.gru.num_layers == 4
    assert model.gru.hidden_size == 200
    # trunk: 6 linear layers, ReLU between but not after the last
    linears = [m for m in model.trunk if isinstance(m, torch.nn.Linear)]
    relus = [m for m in model.trunk if isinstance(m, torch.nn.ReLU)]
    assert len(linears) == 6
    assert len(relus) == 5
    assert not isinstance(model.trunk[-1], torch.nn.ReLU)
    assert linears[-1].out_features == 200


def test_einsum_matches_explicit_loop():
    torch.manual_seed(0)
    model = SDeepONet(SMALL, signal_len=17)
    with torch.no_grad():
        model.beta.fill_(0.37)
    sig = torch.randn(3, 17)
    coords = torch.rand(11, 3)
    out = model(sig, coords)
    with torch.no_grad():
        br = model.branch(sig)
        tr = model.trunk(coords)
        for b in range(3):
            for q in range(11):
                want = (br[b] * tr[q]).sum() + model.beta
                assert out[b, q].item() == pytest.approx(want.item(), abs=1e-5)


def test_per_case_coordinate_batches_match_shared_grid():
    torch.manual_seed(1)
    model = SDeepONet(SMALL, signal_len=17)
    sig = torch.randn(2, 17)
    coords = torch.rand(7, 3)
    shared = model(sig, coords)
    stacked = model(sig, coords[None].expand(2, -1, -1))
    torch.testing.assert_close(shared, stacked, atol=1e-6, rtol=0)


def test_grid_coords_layout():
    g = grid_coords(2, 3, 4)
    assert g.shape == (24, 3)
    # row 0: x=0, y=0, t=1/2 (first frame); C-order means x varies fastest
    np.testing.assert_allclose(g[0], [0.0, 0.0, 0.5])
    np.testing.assert_allclose(g[1], [1 / 3, 0.0, 0.5])
    np.testing.assert_allclose(g[4], [0.0, 0.5, 0.5])  # next row in y
    np.testing.assert_allclose(g[12], [0.0, 0.0, 1.0])  # second frame
    assert g.min() >= 0.0 and g.max() <= 1.0


def test_sdon_forward_validates():
    model = SDeepONet(SMALL, signal_len=17)
    with pytest.raises(InvalidArgumentError):
        sdon_forward(model, np.zeros(23), np.zeros((4, 3)))
    with pytest.raises(InvalidArgumentError):
        sdon_forward(model, np.zeros(17), np.array([[0.0, 0.1, np.inf]]))


def test_training_learns_and_is_deterministic(tiny_cavity):
    cfg = OperatorConfig(hidden_dim=16, gru_layers=1, trunk_layers=3, trunk_width=24,
                         epochs=30, cases_per_batch=4, coords_per_case=256, lr=3e-3)
    m1, n1, h1 = train_operator(tiny_cavity, cfg, seed=0)
    m2, n2, h2 = train_operator(tiny_cavity, cfg, seed=0)
    assert h1 == h2
    for a, b in zip(m1.state_dict().values(), m2.state_dict().values()):
        assert torch.equal(a, b)
    assert (n1.lo, n1.hi) == (n2.lo, n2.hi)
    # loss comes down substantially on five smooth cases
    assert h1[-1] < 0.5 * h1[0]


def test_export_priors_shapes_and_units(tiny_cavity):
    model, normalizer, _ = train_operator(tiny_cavity, SMALL, seed=0)
    priors = export_priors(model, normalizer, tiny_cavity)
    assert set(priors) == {c.case_id for c in tiny_cavity.cases}
    for c in tiny_cavity.cases:
        p = priors[c.case_id]
        assert p.data.shape == c.field.data.shape
        assert p.units == c.field.units
        assert np.isfinite(p.data).all()
    # raw units: a normalized-space output would live in [-1, 1]; the field
    # normalizer maps back to the data range, so scales must match
    spread = max(np.abs(p.data).max() for p in priors.values())
    assert spread <= max(abs(normalizer.lo), abs(normalizer.hi)) + 1e-6


def test_operator_checkpoint_round_trip(tiny_cavity, tmp_path):
    model, normalizer, hist = train_operator(tiny_cavity, SMALL, seed=1)
    save_operator(tmp_path / "op", model, normalizer, hist, seed=1, lineage={"dataset": "x"})
    m2, n2, man = load_operator(tmp_path / "op")
    assert man["seed"] == 1
    assert man["lineage"] == {"dataset": "x"}
    assert (n2.lo, n2.hi) == (normalizer.lo, normalizer.hi)
    sig = tiny_cavity.cases[0].signal
    coords = grid_coords(3, 16, 16)
    np.testing.assert_array_equal(sdon_forward(model, sig, coords), sdon_forward(m2, sig, coords))


def test_priors_container_round_trip(tiny_cavity, tmp_path):
    model, normalizer, _ = train_operator(tiny_cavity, SMALL, seed=0)
    priors = export_priors(model, normalizer, tiny_cavity)
    persist_priors(priors, tiny_cavity, tmp_path / "priors", lineage={"operator": "y"})
    back, man = load_priors(tmp_path / "priors")
    assert man["lineage"] == {"operator": "y"}
    assert set(back) == set(priors)
    for cid in priors:
        np.testing.assert_array_equal(
            priors[cid].data.astype(np.float32), back[cid].data.astype(np.float32)
        )


def test_normalizer_round_trip_and_fit():
    # the fitted box is symmetric about zero: physical zeros stay zero
    n = FieldNormalizer.fit([np.array([-4.0, 0.0]), np.array([6.0])])
    assert (n.lo, n.hi) == (-6.0, 6.0)
    assert n.normalize(np.zeros(3)) == pytest.approx(0.0)
    x = np.linspace(-6, 6, 11)
    z = n.normalize(x)
    assert z.min() == pytest.approx(-1.0) and z.max() == pytest.approx(1.0)
    np.testing.assert_allclose(n.denormalize(z), x, atol=1e-12)


def test_operator_config_validation():
    with pytest.raises(InvalidArgumentError):
        OperatorConfig(hidden_dim=0)
    with pytest.raises(InvalidArgumentError):
        OperatorConfig(trunk_layers=1)
    with pytest.raises(InvalidArgumentError):
        OperatorConfig(epochs=0)
