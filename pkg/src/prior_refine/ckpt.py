"""Torch-module checkpointing on top of the manifest + blob container."""

from __future__ import annotations

import torch

from . import containers
from .errors import ShapeMismatchError

CHECKPOINT_FORMAT = "prior-refine-checkpoint"


def save_model_checkpoint(prefix, kind: str, body: dict, state_dict) -> None:
    """Persist manifest metadata plus all parameters/buffers as one blob.

    Tensor order in the blob follows the manifest's `params` list, so loading
    is unambiguous even if the module's state_dict ordering ever changes.
    """
    params = [{"name": k, "shape": list(v.shape)} for k, v in state_dict.items()]
    arrays = [v.detach().cpu().numpy() for v in state_dict.values()]
    checksum = containers.write_blob(containers.blob_path(prefix, "params"), arrays)
    manifest = dict(body)
    manifest.update({"kind": kind, "params": params, "params_sha256": checksum})
    containers.write_manifest(containers.manifest_path(prefix), CHECKPOINT_FORMAT, manifest)


def load_model_checkpoint(prefix, kind: str):
    """Returns (manifest, state_dict of float32 tensors)."""
    man = containers.read_manifest(containers.manifest_path(prefix), CHECKPOINT_FORMAT)
    if man.get("kind") != kind:
        raise ShapeMismatchError(f"checkpoint kind {man.get('kind')!r}, expected {kind!r}")
    shapes = [tuple(p["shape"]) for p in man["params"]]
    arrays = containers.read_blob(
        containers.blob_path(prefix, "params"), shapes, checksum=man.get("params_sha256")
    )
    state = {p["name"]: torch.from_numpy(a) for p, a in zip(man["params"], arrays)}
    return man, state
