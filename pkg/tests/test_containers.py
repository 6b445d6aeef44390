"""Binary container primitives and model checkpoints."""

import json

import numpy as np
import pytest
import torch

from prior_refine import ckpt, containers
from prior_refine.errors import (
    ContainerError,
    ShapeMismatchError,
    TruncatedBlobError,
)


def test_blob_round_trip_and_checksum(tmp_path):
    arrs = [np.arange(12, dtype=np.float64).reshape(3, 4), np.ones((2, 2), dtype=np.float32)]
    path = tmp_path / "x.bin"
    sha = containers.write_blob(path, arrs)
    assert len(sha) == 64
    back = containers.read_blob(path, [(3, 4), (2, 2)], checksum=sha)
    np.testing.assert_array_equal(back[0], arrs[0].astype(np.float32))
    np.testing.assert_array_equal(back[1], arrs[1])


def test_blob_is_little_endian_f32(tmp_path):
    import struct

    path = tmp_path / "x.bin"
    containers.write_blob(path, [np.array([1.5, -2.0], dtype=np.float64)])
    assert path.read_bytes() == struct.pack("<2f", 1.5, -2.0)


def test_blob_error_taxonomy(tmp_path):
    path = tmp_path / "x.bin"
    containers.write_blob(path, [np.zeros((4,), dtype=np.float32)])
    with pytest.raises(TruncatedBlobError):
        containers.read_blob(path, [(5,)])
    with pytest.raises(ShapeMismatchError):
        containers.read_blob(path, [(3,)])
    with pytest.raises(ContainerError):
        containers.read_blob(path, [(4,)], checksum="0" * 64)


def test_manifest_reserved_keys(tmp_path):
    with pytest.raises(ValueError):
        containers.write_manifest(tmp_path / "m.json", "fmt", {"format": "clash"})


def test_json_writes_are_canonical(tmp_path):
    p = tmp_path / "a.json"
    containers.atomic_write_json(p, {"b": 1, "a": 2})
    text = p.read_text()
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')  # sorted keys
    containers.atomic_write_json(p, {"a": 2, "b": 1})
    assert p.read_text() == text  # insertion order cannot leak into bytes


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(0)
    lin = torch.nn.Linear(4, 3)
    body = {"note": "tiny", "lineage": {"dataset": "h"}}
    ckpt.save_model_checkpoint(tmp_path / "ck", "operator", body, lin.state_dict())
    man, state = ckpt.load_model_checkpoint(tmp_path / "ck", "operator")
    assert man["note"] == "tiny"
    for name, tensor in lin.state_dict().items():
        assert torch.equal(state[name], tensor)


def test_checkpoint_kind_mismatch(tmp_path):
    lin = torch.nn.Linear(2, 2)
    ckpt.save_model_checkpoint(tmp_path / "ck", "operator", {}, lin.state_dict())
    with pytest.raises(ShapeMismatchError):
        ckpt.load_model_checkpoint(tmp_path / "ck", "diffusion")


def test_checkpoint_detects_corruption(tmp_path):
    lin = torch.nn.Linear(2, 2)
    ckpt.save_model_checkpoint(tmp_path / "ck", "operator", {}, lin.state_dict())
    blob = tmp_path / "ck.params.bin"
    raw = bytearray(blob.read_bytes())
    raw[0] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.raises(ContainerError):
        ckpt.load_model_checkpoint(tmp_path / "ck", "operator")


def test_manifest_json_deterministic_for_checkpoints(tmp_path):
    torch.manual_seed(1)
    lin = torch.nn.Linear(3, 3)
    ckpt.save_model_checkpoint(tmp_path / "a", "operator", {"seed": 1}, lin.state_dict())
    ckpt.save_model_checkpoint(tmp_path / "b", "operator", {"seed": 1}, lin.state_dict())
    a = json.loads((tmp_path / "a.manifest.json").read_text())
    b = json.loads((tmp_path / "b.manifest.json").read_text())
    assert a == b
