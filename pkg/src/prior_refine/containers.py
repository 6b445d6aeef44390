"""Manifest + raw-blob container used for datasets, priors, and checkpoints.

A container is a path prefix `<name>` expanded into `<name>.manifest.json`
plus one or more `<name>.<blob>.bin` files. Blobs are float32 little-endian,
C-order, with shapes declared in the manifest. Writes are atomic (temp file
in the same directory, then rename), so an interrupted run never leaves a
readable artifact under its final name.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import (
    ContainerError,
    ShapeMismatchError,
    TruncatedBlobError,
    VersionMismatchError,
)

CONTAINER_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def atomic_write_json(path, obj) -> None:
    atomic_write_bytes(path, json.dumps(obj, indent=2, sort_keys=True).encode() + b"\n")


def write_blob(path, arrays) -> str:
    """Write a list of arrays as one concatenated f32le blob; returns sha256."""
    chunks = [np.ascontiguousarray(a, dtype=BLOB_DTYPE).tobytes() for a in arrays]
    payload = b"".join(chunks)
    atomic_write_bytes(path, payload)
    return hashlib.sha256(payload).hexdigest()


def read_blob(path, shapes, checksum: str | None = None):
    """Read back arrays with the given shapes from a concatenated f32le blob."""
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"missing blob file: {path}")
    payload = path.read_bytes()
    expected = sum(int(np.prod(s)) for s in shapes) * BLOB_DTYPE.itemsize
    if len(payload) < expected:
        raise TruncatedBlobError(
            f"{path}: blob holds {len(payload)} bytes, manifest declares {expected}"
        )
    if len(payload) > expected:
        raise ShapeMismatchError(
            f"{path}: blob holds {len(payload)} bytes but manifest shapes "
            f"account for only {expected}"
        )
    if checksum is not None:
        digest = hashlib.sha256(payload).hexdigest()
        if digest != checksum:
            raise ContainerError(f"{path}: blob checksum mismatch")
    out = []
    offset = 0
    for shape in shapes:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype=BLOB_DTYPE, count=n, offset=offset)
        out.append(arr.reshape(shape).copy())
        offset += n * BLOB_DTYPE.itemsize
    return out


def write_manifest(path, fmt: str, body: dict) -> None:
    manifest = {"format": fmt, "version": CONTAINER_VERSION}
    overlap = set(manifest) & set(body)
    if overlap:
        raise ValueError(f"manifest body shadows reserved keys: {sorted(overlap)}")
    manifest.update(body)
    atomic_write_json(path, manifest)


def read_manifest(path, fmt: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"missing manifest: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != fmt:
        raise VersionMismatchError(
            f"{path}: format {manifest.get('format')!r}, expected {fmt!r}"
        )
    if manifest.get("version") != CONTAINER_VERSION:
        raise VersionMismatchError(
            f"{path}: container version {manifest.get('version')!r}, "
            f"this build reads version {CONTAINER_VERSION}"
        )
    return manifest


def manifest_path(prefix) -> Path:
    return Path(str(prefix) + ".manifest.json")


def blob_path(prefix, name: str) -> Path:
    return Path(str(prefix) + f".{name}.bin")
