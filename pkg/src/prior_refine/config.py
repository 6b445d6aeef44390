"""Pipeline configuration: one JSON file with dataset / operator / diffusion
/ eval sections, strict key validation, and per-section content hashes used
for artifact lineage.

A minimal config like {"dataset": {"benchmark": "cavity"}} fills every
default (grid 32, T 16, operator hidden dim 200, ...). Unknown keys are
rejected with the offending key name and the expected type.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class DatasetSection:
    benchmark: str = "cavity"
    n_cases: int = 256
    grid: int | None = None  # default 32 (cavity) / 48 (dogbone)
    frames: int = 16
    l: int = 101
    seed: int = 0
    split_seed: int = 0
    reynolds: float = 100.0
    value_bound: float | None = None
    n_control: int = 6

    def resolved_grid(self) -> int:
        if self.grid is not None:
            return self.grid
        return 32 if self.benchmark == "cavity" else 48


@dataclass
class OperatorSection:
    hidden_dim: int = 200
    gru_layers: int = 4
    trunk_layers: int = 6
    trunk_width: int = 128
    lr: float = 1e-3
    epochs: int = 200
    cases_per_batch: int = 8
    coords_per_case: int = 1024
    seed: int = 0


@dataclass
class DiffusionSection:
    target_mode: str = "residual"
    use_prior: bool = True
    priors_path: str | None = "auto"  # "auto" resolves to <out>/priors
    base_channels: int = 16
    channel_mults: tuple = (1, 2, 3, 4)
    cond_dim: int = 96
    head_dim: int = 16
    attn_levels: tuple | None = None
    steps: int = 1500
    batch_size: int = 4
    lr: float = 2e-4
    p_uncond: float = 0.1
    guidance_scale: float = 1.5
    sigma_mean: float = -1.2
    sigma_std: float = 1.2
    grad_clip: float = 1.0
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    sigma_data: float = 0.5
    n_steps: int = 32
    seed: int = 0


@dataclass
class EvalSection:
    variants: tuple = ("sdon", "vd-np", "vd-pc-d", "vd-pc-r")
    base_seed: int = 0
    guidance_scale: float | None = None  # None -> the trained default
    ensemble: int = 1
    sample_batch: int = 8


@dataclass
class PipelineConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    eval: EvalSection = field(default_factory=EvalSection)


_OPTIONAL = {
    ("dataset", "grid"), ("dataset", "value_bound"),
    ("diffusion", "attn_levels"), ("diffusion", "priors_path"),
    ("eval", "guidance_scale"),
}
_TUPLE_FIELDS = {
    ("diffusion", "channel_mults"): int,
    ("diffusion", "attn_levels"): int,
    ("eval", "variants"): str,
}
_SECTIONS = {
    "dataset": DatasetSection,
    "operator": OperatorSection,
    "diffusion": DiffusionSection,
    "eval": EvalSection,
}


def _expected_name(section: str, name: str) -> str:
    if (section, name) in _TUPLE_FIELDS:
        elem = _TUPLE_FIELDS[(section, name)].__name__
        return f"list of {elem}"
    default = getattr(_SECTIONS[section](), name)
    base = type(default).__name__ if default is not None else "value"
    if isinstance(default, bool):
        base = "bool"
    elif isinstance(default, float):
        base = "number"
    elif isinstance(default, int):
        base = "int"
    return base


def _coerce(section: str, name: str, value, default):
    where = f"{section}.{name}"
    if value is None:
        if (section, name) in _OPTIONAL:
            return None
        raise ConfigError(f"{where}: null not allowed; expected "
                          f"{_expected_name(section, name)}")
    if (section, name) in _TUPLE_FIELDS:
        elem = _TUPLE_FIELDS[(section, name)]
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, elem) for v in value):
            raise ConfigError(f"{where}: expected list of {elem.__name__}, got {value!r}")
        return tuple(value)
    if isinstance(default, bool) or (default is None and isinstance(value, bool)):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected bool, got {type(value).__name__}")
        return value
    if isinstance(default, float) or (section, name) in (("dataset", "value_bound"), ("eval", "guidance_scale")):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected number, got {type(value).__name__}")
        return float(value)
    if isinstance(default, int) or (section, name) == ("dataset", "grid"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected int, got {type(value).__name__}")
        return value
    if isinstance(default, str) or (section, name) == ("diffusion", "priors_path"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected str, got {type(value).__name__}")
        return value
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _build_section(section: str, data) -> object:
    cls = _SECTIONS[section]
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(
                f"{section}.{key}: unknown key; known keys: {', '.join(sorted(known))}"
            )
        kwargs[key] = _coerce(section, key, value, getattr(defaults, key))
    return cls(**kwargs)


def _validate(cfg: PipelineConfig) -> PipelineConfig:
    if cfg.dataset.benchmark not in ("cavity", "dogbone"):
        raise ConfigError(f"dataset.benchmark: expected 'cavity' or 'dogbone', "
                          f"got {cfg.dataset.benchmark!r}")
    if cfg.diffusion.target_mode not in ("full", "residual"):
        raise ConfigError(f"diffusion.target_mode: expected 'full' or 'residual', "
                          f"got {cfg.diffusion.target_mode!r}")
    if cfg.diffusion.target_mode == "residual" and cfg.diffusion.priors_path is None:
        raise ConfigError("diffusion.priors_path: residual targets need a priors path "
                          "('auto' uses the pipeline default)")
    if cfg.diffusion.target_mode == "residual" and not cfg.diffusion.use_prior:
        raise ConfigError("diffusion.use_prior: must be true for residual targets")
    for v in cfg.eval.variants:
        if v not in ("sdon", "vd-np", "vd-pc-d", "vd-pc-r"):
            raise ConfigError(f"eval.variants: unknown variant {v!r}")
    return cfg


def parse_config(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root: expected an object, got {type(raw).__name__}")
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section; expected one of "
                              f"{', '.join(sorted(_SECTIONS))}")
    sections = {name: _build_section(name, raw.get(name, {})) for name in _SECTIONS}
    return _validate(PipelineConfig(**sections))


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)


def dump_config(cfg: PipelineConfig) -> dict:
    out = {}
    for name, section in (("dataset", cfg.dataset), ("operator", cfg.operator),
                          ("diffusion", cfg.diffusion), ("eval", cfg.eval)):
        row = {}
        for f in fields(section):
            val = getattr(section, f.name)
            row[f.name] = list(val) if isinstance(val, tuple) else val
        out[name] = row
    return out


def section_hash(cfg: PipelineConfig, section: str) -> str:
    payload = json.dumps(dump_config(cfg)[section], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def config_hash(cfg: PipelineConfig) -> str:
    payload = json.dumps(dump_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
