"""Synthetic masked stress videos standing in for the tensile-specimen runs.

The field is a superposition of fixed smooth spatial modes whose common
amplitude follows the load signal through a strictly monotone map, multiplied
by the domain mask so void cells are exactly zero. One mode draw (seeded) is
shared across a dataset, so the video is a deterministic function of the
signal and the pipeline has something learnable.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from .signals import InputSignal
from .types import DomainMask, FieldVideo

_N_MODES = 5
# stress per unit signal; keeps fields at O(10) MPa for 5% strain-scale loads
_STRESS_SCALE = 200.0


def von_mises_field(s11: np.ndarray, s22: np.ndarray, s12: np.ndarray) -> np.ndarray:
    """Pointwise equivalent stress sqrt(s11^2 + s22^2 - s11*s22 + 3*s12^2)."""
    s11 = np.asarray(s11, dtype=np.float64)
    s22 = np.asarray(s22, dtype=np.float64)
    s12 = np.asarray(s12, dtype=np.float64)
    if not (s11.shape == s22.shape == s12.shape):
        raise InvalidArgumentError(
            f"stress components must share a shape, got {s11.shape}/{s22.shape}/{s12.shape}"
        )
    if not (np.isfinite(s11).all() and np.isfinite(s22).all() and np.isfinite(s12).all()):
        raise InvalidArgumentError("stress components must be finite")
    inner = s11**2 + s22**2 - s11 * s22 + 3.0 * s12**2
    return np.sqrt(np.maximum(inner, 0.0))


def dogbone_mask(h: int, w: int) -> DomainMask:
    """Tensile-specimen silhouette: wide grips, narrow gauge, cosine fillets."""
    if h < 8 or w < 8:
        raise InvalidArgumentError(f"mask grid too small: ({h}, {w})")
    x = np.linspace(0.0, 1.0, w)
    y = np.linspace(0.0, 1.0, h)
    grip, gauge = 0.42, 0.20
    half = np.full(w, gauge)
    taper = 0.18  # grip and fillet each span this fraction of the length
    for i, xi in enumerate(x):
        d = min(xi, 1.0 - xi)
        if d < taper:
            half[i] = grip
        elif d < 2 * taper:
            s = (d - taper) / taper
            half[i] = grip + (gauge - grip) * 0.5 * (1 - np.cos(np.pi * s))
    mask = (np.abs(y[:, None] - 0.5) <= half[None, :]).astype(np.uint8)
    return DomainMask(mask)


def amplitude_map(s):
    """Strictly monotone signal -> amplitude map; near-linear with a mild
    cubic stiffening term (derivative 1 + 0.15*(3s^2+s^4)/(1+s^2)^2 >= 1)."""
    s = np.asarray(s, dtype=np.float64)
    return s + 0.15 * s**3 / (1.0 + s**2)


def synth_masked_stress(signal: InputSignal, mask: DomainMask, seed: int, frames: int) -> FieldVideo:
    if frames < 2:
        raise InvalidArgumentError(f"frames={frames}, need at least 2")
    if not mask.data.any():
        raise InvalidArgumentError("mask is all zero")
    hh, ww = mask.shape
    rng = np.random.default_rng(seed)

    y, x = np.mgrid[0:hh, 0:ww]
    x = x / (ww - 1)
    y = y / (hh - 1)
    modes = np.zeros((_N_MODES, hh, ww))
    coeffs = rng.uniform(0.5, 1.5, size=_N_MODES)
    centers = rng.uniform(0.2, 0.8, size=(_N_MODES, 2))
    widths = rng.uniform(0.12, 0.35, size=_N_MODES)
    for k in range(_N_MODES):
        r2 = (x - centers[k, 0]) ** 2 + (y - centers[k, 1]) ** 2
        modes[k] = np.exp(-r2 / (2 * widths[k] ** 2))
    freqs = rng.uniform(0.5, 2.0, size=_N_MODES)
    phases = rng.uniform(0.0, 2 * np.pi, size=_N_MODES)

    t_end = float(signal.times[-1])
    frame_times = (np.arange(frames) + 1) / frames * t_end
    amp = amplitude_map(signal.resample(frame_times))

    envelopes = 0.5 + 0.5 * np.cos(2 * np.pi * freqs[:, None] * frame_times[None, :] + phases[:, None])
    spatial = np.einsum("k,kt,khw->thw", coeffs, envelopes, modes)
    data = _STRESS_SCALE * amp[:, None, None] * spatial * mask.data[None, :, :]
    return FieldVideo(data=data, field_kind="synthetic", units="MPa", dt=t_end / frames)
