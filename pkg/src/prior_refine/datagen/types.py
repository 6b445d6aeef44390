"""Field containers shared by the generators and the downstream stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

FIELD_KINDS = ("streamfunction", "von_mises", "synthetic")


@dataclass
class FieldVideo:
    """Scalar solution field on a regular grid, (T, H, W) plus metadata.

    Ground-truth streamfunction videos produced by the solver additionally
    have exactly-zero walls; model-predicted videos of the same kind do not,
    so that check lives in `assert_zero_walls`, called at generation sites.
    """

    data: np.ndarray
    field_kind: str
    units: str
    dt: float

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise InvalidArgumentError(f"field video must be (T, H, W), got {self.data.shape}")
        if min(self.data.shape) < 1:
            raise InvalidArgumentError("field video dims must all be >= 1")
        if not np.isfinite(self.data).all():
            raise InvalidArgumentError("field video contains non-finite entries")
        if self.field_kind not in FIELD_KINDS:
            raise InvalidArgumentError(f"unknown field_kind {self.field_kind!r}")
        if self.dt <= 0:
            raise InvalidArgumentError("frame dt must be positive")

    @property
    def shape(self):
        return self.data.shape

    def assert_zero_walls(self):
        walls = [self.data[:, 0, :], self.data[:, -1, :], self.data[:, :, 0], self.data[:, :, -1]]
        if any(np.any(w != 0.0) for w in walls):
            raise InvalidArgumentError("streamfunction video has nonzero wall values")


@dataclass
class DomainMask:
    """Binary (H, W) grid: 1 = material, 0 = void."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise InvalidArgumentError(f"mask must be (H, W), got {self.data.shape}")
        vals = np.unique(self.data)
        if not np.isin(vals, (0, 1)).all():
            raise InvalidArgumentError("mask values must be 0 or 1")
        if not self.data[1:-1, 1:-1].any():
            raise InvalidArgumentError("mask has no interior material cell")

    @property
    def shape(self):
        return self.data.shape
