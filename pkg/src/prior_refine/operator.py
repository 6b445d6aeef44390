"""Sequence-to-field operator network: recurrent branch, coordinate trunk,
inner-product combination with a trainable scalar bias.

The branch encodes the boundary signal a into a latent Br(a) of length HD
(final hidden state of the last recurrent layer, projected); the trunk maps a
normalized query (x, y, t) in [0,1]^3 to Tr(x,y,t) of the same length. The
prediction is u_hat = sum_i Br_i(a) Tr_i(x,y,t) + beta, evaluated for whole
coordinate grids with one einsum. Trained on normalized fields; exported
prior videos are denormalized back to field units and frozen thereafter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import ckpt, containers
from .datagen.types import FieldVideo
from .errors import ContainerError, InternalError, InvalidArgumentError, TrainingDivergedError

PRIORS_FORMAT = "prior-refine-priors"

log = logging.getLogger(__name__)


@dataclass
class OperatorConfig:
    hidden_dim: int = 200
    gru_layers: int = 4
    trunk_layers: int = 6
    trunk_width: int = 128
    lr: float = 1e-3
    epochs: int = 200
    cases_per_batch: int = 8
    coords_per_case: int = 1024

    def __post_init__(self):
        if self.hidden_dim < 1 or self.gru_layers < 1:
            raise InvalidArgumentError("hidden_dim and gru_layers must be >= 1")
        if self.trunk_layers < 2:
            raise InvalidArgumentError("trunk needs at least 2 layers")
        if self.epochs < 1 or self.cases_per_batch < 1 or self.coords_per_case < 1:
            raise InvalidArgumentError("epochs and batch sizes must be >= 1")

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "hidden_dim", "gru_layers", "trunk_layers", "trunk_width",
            "lr", "epochs", "cases_per_batch", "coords_per_case")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class FieldNormalizer:
    """Affine map [lo, hi] <-> [-1, 1], fitted on the training split."""

    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite([self.lo, self.hi]).all() or self.lo >= self.hi:
            raise InvalidArgumentError(f"degenerate field range ({self.lo}, {self.hi})")

    def normalize(self, x):
        return 2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, x):
        return (x + 1.0) / 2.0 * (self.hi - self.lo) + self.lo

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d):
        return cls(lo=d["lo"], hi=d["hi"])

    @classmethod
    def fit(cls, arrays):
        # symmetric about zero so physical zeros (walls, rest states,
        # masked-out pixels) map to exactly zero in normalized units
        m = max(float(np.abs(a).max()) for a in arrays)
        return cls(lo=-m, hi=m)


class SDeepONet(nn.Module):
    def __init__(self, config: OperatorConfig, signal_len: int):
        super().__init__()
        self.config = config
        self.signal_len = signal_len
        hd = config.hidden_dim
        self.gru = nn.GRU(1, hd, num_layers=config.gru_layers, batch_first=True)
        self.proj = nn.Linear(hd, hd)
        layers: list[nn.Module] = []
        width_in = 3
        for i in range(config.trunk_layers - 1):
            layers += [nn.Linear(width_in, config.trunk_width), nn.ReLU()]
            width_in = config.trunk_width
        layers.append(nn.Linear(width_in, hd))
        self.trunk = nn.Sequential(*layers)
        self.beta = nn.Parameter(torch.zeros(()))

    def branch(self, signals: torch.Tensor) -> torch.Tensor:
        # (B, l) -> (B, HD); latent = last layer's final hidden state
        _, h = self.gru(signals[:, :, None])
        return self.proj(h[-1])

    def forward(self, signals: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
        br = self.branch(signals)
        tr = self.trunk(coords)
        if coords.ndim == 2:  # shared (Q, 3) grid
            return torch.einsum("bh,qh->bq", br, tr) + self.beta
        return torch.einsum("bh,bqh->bq", br, tr) + self.beta  # per-case (B, Q, 3)


def grid_coords(frames: int, height: int, width: int) -> np.ndarray:
    """(T*H*W, 3) query grid in [0,1]^3, ordered like a C-order (T,H,W) video.

    Frame k sits at time (k+1)/T, matching the solver's frame times.
    """
    t = (np.arange(frames) + 1) / frames
    y = np.linspace(0.0, 1.0, height)
    x = np.linspace(0.0, 1.0, width)
    tt, yy, xx = np.meshgrid(t, y, x, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), tt.ravel()], axis=1)


def sdon_forward(model: SDeepONet, signal, coords) -> np.ndarray:
    """One signal, arbitrary query coordinates -> predicted values (Q,)."""
    values = np.asarray(signal.values if hasattr(signal, "values") else signal, dtype=np.float64)
    if values.shape[-1] != model.signal_len:
        raise InvalidArgumentError(
            f"signal length {values.shape[-1]} != trained length {model.signal_len}"
        )
    coords = np.asarray(coords, dtype=np.float64)
    if not np.isfinite(coords).all():
        raise InvalidArgumentError("query coordinates must be finite")
    with torch.no_grad():
        sig_t = torch.from_numpy(values).float()[None, :]
        out = model(sig_t, torch.from_numpy(coords).float())
    return out[0].numpy().astype(np.float64)


def train_operator(dataset, config: OperatorConfig, seed: int = 0):
    """Coordinate-batched MSE regression of the train split; returns
    (model, normalizer, loss log). Deterministic given seed."""
    train_idx, _ = dataset.split()
    cases = dataset.subset(train_idx)
    if not cases:
        raise InvalidArgumentError("train split is empty")
    t, h, w = cases[0].field.shape
    l = len(cases[0].signal)

    normalizer = FieldNormalizer.fit([c.field.data for c in cases])
    fields = torch.from_numpy(
        np.stack([normalizer.normalize(c.field.data) for c in cases])
    ).float().reshape(len(cases), -1)
    signals = torch.from_numpy(np.stack([c.signal.values for c in cases])).float()
    full_grid = torch.from_numpy(grid_coords(t, h, w)).float()
    n_queries = full_grid.shape[0]

    torch.manual_seed(seed)
    model = SDeepONet(config, signal_len=l)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    steps_per_epoch = max(1, len(cases) // config.cases_per_batch)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs * steps_per_epoch)
    gen = torch.Generator().manual_seed(seed)

    history = []
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for step in range(steps_per_epoch):
            case_ix = torch.randint(len(cases), (config.cases_per_batch,), generator=gen)
            q_ix = torch.randint(n_queries, (config.cases_per_batch, config.coords_per_case),
                                 generator=gen)
            coords = full_grid[q_ix]                      # (B, Q, 3)
            target = fields[case_ix[:, None], q_ix]       # (B, Q)
            pred = model(signals[case_ix], coords)
            loss = ((pred - target) ** 2).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"operator loss non-finite at epoch {epoch}, step {step}, "
                    f"lr {opt.param_groups[0]['lr']:.3e}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            epoch_loss += float(loss.detach())
        history.append(epoch_loss / steps_per_epoch)
        if epoch % 20 == 0 or epoch == config.epochs - 1:
            log.info("operator epoch %d/%d mse %.5f", epoch, config.epochs, history[-1])
    return model, normalizer, history


def export_priors(model: SDeepONet, normalizer: FieldNormalizer, dataset) -> dict:
    """Frozen full-grid predictions for every case (train and test), in raw
    field units, keyed by case_id."""
    t, h, w = dataset.manifest["T"], dataset.manifest["H"], dataset.manifest["W"]
    coords = torch.from_numpy(grid_coords(t, h, w)).float()
    out = {}
    model.eval()
    with torch.no_grad():
        for case in dataset.cases:
            sig = torch.from_numpy(np.asarray(case.signal.values)).float()[None, :]
            pred = model(sig, coords)[0].numpy().reshape(t, h, w)
            data = normalizer.denormalize(pred.astype(np.float64))
            if data.shape != case.field.shape:
                raise InternalError(
                    f"prior shape {data.shape} != manifest shape {case.field.shape}"
                )
            out[case.case_id] = FieldVideo(
                data=data, field_kind=case.field.field_kind,
                units=case.field.units, dt=case.field.dt,
            )
    return out


def persist_priors(priors: dict, dataset, prefix, lineage: dict | None = None) -> None:
    """Freeze exported priors beside the dataset; checksummed so later stages
    can verify the bytes never changed."""
    ids = [c.case_id for c in dataset.cases]
    missing = [i for i in ids if i not in priors]
    if missing:
        raise InvalidArgumentError(f"priors missing for cases: {missing[:5]}")
    stack = np.stack([priors[i].data for i in ids])
    checksum = containers.write_blob(containers.blob_path(prefix, "fields"), [stack])
    first = priors[ids[0]]
    containers.write_manifest(containers.manifest_path(prefix), PRIORS_FORMAT, {
        "case_ids": ids,
        "shape": list(stack.shape),
        "field_kind": first.field_kind,
        "units": first.units,
        "dt": first.dt,
        "blob_sha256": checksum,
        "lineage": lineage or {},
    })


def load_priors(prefix) -> tuple[dict, dict]:
    """Returns ({case_id: FieldVideo}, manifest)."""
    man = containers.read_manifest(containers.manifest_path(prefix), PRIORS_FORMAT)
    shape = tuple(man["shape"])
    if len(shape) != 4:
        raise ContainerError(f"priors blob shape {shape} is not (N, T, H, W)")
    stack = containers.read_blob(
        containers.blob_path(prefix, "fields"), [shape], checksum=man["blob_sha256"]
    )[0]
    out = {
        cid: FieldVideo(data=stack[i].astype(np.float64), field_kind=man["field_kind"],
                        units=man["units"], dt=man["dt"])
        for i, cid in enumerate(man["case_ids"])
    }
    return out, man


def save_operator(prefix, model: SDeepONet, normalizer: FieldNormalizer,
                  history, seed: int, lineage: dict | None = None) -> None:
    body = {
        "config": model.config.to_dict(),
        "signal_len": model.signal_len,
        "normalizer": normalizer.to_dict(),
        "seed": seed,
        "loss_history": [float(v) for v in history],
        "lineage": lineage or {},
    }
    ckpt.save_model_checkpoint(prefix, "operator", body, model.state_dict())


def load_operator(prefix):
    man, state = ckpt.load_model_checkpoint(prefix, "operator")
    model = SDeepONet(OperatorConfig.from_dict(man["config"]), signal_len=man["signal_len"])
    model.load_state_dict(state)
    model.eval()
    return model, FieldNormalizer.from_dict(man["normalizer"]), man
