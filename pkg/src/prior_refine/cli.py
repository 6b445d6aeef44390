"""Command-line pipeline driver.

Stages write self-describing artifacts under one output root and stamp them
with the config-section hashes they were produced from, so later stages can
refuse to mix artifacts from different configurations.

Layout under the output root (--out, then PRIOR_REFINE_OUT, then ./out):

    dataset.*                  paired signal/field dataset
    operator.*                 trained operator checkpoint
    priors.*                   exported operator predictions, raw units
    diffusion-<variant>.*      trained refiner checkpoint per variant
    samples-<variant>.*        sampled videos for the test split
    eval/                      report.json, per_case.csv, plots
    logs/<command>.runlog.json wall time / seed / config hash per run
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import ablation
from .config import PipelineConfig, config_hash, load_config, section_hash
from .containers import atomic_write_json, blob_path, manifest_path, write_blob, write_manifest
from .datagen import generate_dataset, load_dataset, persist_dataset
from .diffusion import (
    DenoiserConfig,
    DiffusionTrainConfig,
    NoiseSchedule,
    load_diffusion,
    sample_videos,
    save_diffusion,
    train_diffusion,
)
from .errors import ConfigError, LineageError, PreconditionError, PriorRefineError
from .operator import (
    OperatorConfig,
    export_priors,
    load_operator,
    load_priors,
    persist_priors,
    save_operator,
    train_operator,
)

SAMPLES_FORMAT = "prior-refine-samples"

# variant -> (target_mode, use_prior)
VARIANT_MODES = {
    "vd-np": ("full", False),
    "vd-pc-d": ("full", True),
    "vd-pc-r": ("residual", True),
}


class Workspace:
    """Artifact paths under one output root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def operator(self) -> Path:
        return self.root / "operator"

    @property
    def priors(self) -> Path:
        return self.root / "priors"

    def diffusion(self, variant: str) -> Path:
        return self.root / f"diffusion-{variant}"

    def samples(self, variant: str) -> Path:
        return self.root / f"samples-{variant}"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    @property
    def logs(self) -> Path:
        return self.root / "logs"


def _resolve_out(arg_out: str | None) -> Path:
    if arg_out:
        return Path(arg_out)
    env = os.environ.get("PRIOR_REFINE_OUT")
    if env:
        return Path(env)
    return Path("out")


def _require_artifacts(items: dict[str, Path]) -> None:
    """items maps a human label to a container prefix; all must exist."""
    missing = [f"{label} ({manifest_path(p)})" for label, p in items.items() if not Path(manifest_path(p)).exists()]
    if missing:
        raise PreconditionError(
            "missing artifacts, run the earlier stages first: " + ", ".join(missing)
        )


def _check_lineage(label: str, found: dict, expected: dict, force: bool) -> None:
    """Shared keys must agree; disagreement means the artifact was built
    from a different config than the one being evaluated."""
    stale = {k: (found.get(k), expected[k]) for k in expected if k in found and found[k] != expected[k]}
    if not stale:
        return
    detail = "; ".join(f"{k}: artifact {a[:12]} vs config {b[:12]}" for k, (a, b) in stale.items())
    if force:
        print(f"warning: {label} lineage mismatch ignored (--force): {detail}", file=sys.stderr)
        return
    raise LineageError(f"{label} was built from a different config ({detail}); rerun the stage or pass --force")


def _write_runlog(ws: Workspace, command: str, cfg_hash: str, seed: int | None, started: float, args: argparse.Namespace) -> None:
    ws.logs.mkdir(parents=True, exist_ok=True)
    log = {
        "command": command,
        "config": str(args.config) if getattr(args, "config", None) else None,
        "config_hash": cfg_hash,
        "seed": seed,
        "jobs": getattr(args, "jobs", 1),
        "wall_time_s": round(time.monotonic() - started, 3),
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write_json(ws.logs / f"{command}.runlog.json", log)


def _resolve_variant(args: argparse.Namespace, cfg: PipelineConfig) -> str:
    """Pick the refiner variant from --variant, --target, or the config."""
    variant = getattr(args, "variant", None)
    target = getattr(args, "target", None)
    if variant is not None:
        if target is not None and VARIANT_MODES[variant][0] != target:
            raise ConfigError(f"--variant {variant} implies target {VARIANT_MODES[variant][0]!r}, not {target!r}")
        return variant
    if target == "residual":
        return "vd-pc-r"
    if target == "full":
        return "vd-pc-d" if cfg.diffusion.use_prior else "vd-np"
    if cfg.diffusion.target_mode == "residual":
        return "vd-pc-r"
    return "vd-pc-d" if cfg.diffusion.use_prior else "vd-np"


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    ds_cfg = cfg.dataset
    if args.seed is not None:
        ds_cfg.seed = args.seed
    dataset = generate_dataset(
        benchmark=ds_cfg.benchmark,
        n_cases=ds_cfg.n_cases,
        grid=ds_cfg.resolved_grid(),
        frames=ds_cfg.frames,
        l=ds_cfg.l,
        seed=ds_cfg.seed,
        split_seed=ds_cfg.split_seed,
        reynolds=ds_cfg.reynolds,
        value_bound=ds_cfg.value_bound,
        n_control=ds_cfg.n_control,
        jobs=args.jobs,
    )
    dataset.manifest["lineage"] = {"dataset": section_hash(cfg, "dataset")}
    ws.root.mkdir(parents=True, exist_ok=True)
    persist_dataset(dataset, ws.dataset)
    tr, te = dataset.split()
    print(f"wrote {manifest_path(ws.dataset)}: {len(dataset.cases)} cases "
          f"({len(tr)} train / {len(te)} test), grid {ds_cfg.resolved_grid()}, {ds_cfg.frames} frames")


def cmd_train_operator(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    _require_artifacts({"dataset": ws.dataset})
    dataset = load_dataset(ws.dataset)
    _check_lineage("dataset", dataset.manifest.get("lineage", {}), {"dataset": section_hash(cfg, "dataset")}, args.force)

    op = cfg.operator
    if args.seed is not None:
        op.seed = args.seed
    op_config = OperatorConfig(
        hidden_dim=op.hidden_dim,
        gru_layers=op.gru_layers,
        trunk_layers=op.trunk_layers,
        trunk_width=op.trunk_width,
        lr=op.lr,
        epochs=op.epochs,
        cases_per_batch=op.cases_per_batch,
        coords_per_case=op.coords_per_case,
    )
    model, normalizer, history = train_operator(dataset, op_config, seed=op.seed)
    lineage = {"dataset": section_hash(cfg, "dataset"), "operator": section_hash(cfg, "operator")}
    save_operator(ws.operator, model, normalizer, history, seed=op.seed, lineage=lineage)
    print(f"wrote {manifest_path(ws.operator)}: final train loss {history[-1]:.6f} after {len(history)} epochs")


def cmd_export_priors(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    _require_artifacts({"dataset": ws.dataset, "operator": ws.operator})
    dataset = load_dataset(ws.dataset)
    model, normalizer, op_manifest = load_operator(ws.operator)
    expected = {"dataset": section_hash(cfg, "dataset"), "operator": section_hash(cfg, "operator")}
    _check_lineage("dataset", dataset.manifest.get("lineage", {}), expected, args.force)
    _check_lineage("operator", op_manifest.get("lineage", {}), expected, args.force)

    priors = export_priors(model, normalizer, dataset)
    persist_priors(priors, dataset, ws.priors, lineage=expected)
    print(f"wrote {manifest_path(ws.priors)}: {len(priors)} prior videos")


def cmd_train_diffusion(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    variant = _resolve_variant(args, cfg)
    target_mode, use_prior = VARIANT_MODES[variant]
    # Reflect the effective variant into the section before hashing so the
    # lineage names what was actually trained, not what the file said.
    cfg.diffusion.target_mode = target_mode
    cfg.diffusion.use_prior = use_prior
    if args.seed is not None:
        cfg.diffusion.seed = args.seed
    d = cfg.diffusion

    needed = {"dataset": ws.dataset}
    if use_prior:
        needed["priors"] = ws.priors
    _require_artifacts(needed)
    dataset = load_dataset(ws.dataset)
    expected = {"dataset": section_hash(cfg, "dataset")}
    _check_lineage("dataset", dataset.manifest.get("lineage", {}), expected, args.force)
    priors = None
    if use_prior:
        priors, pr_manifest = load_priors(ws.priors)
        _check_lineage(
            "priors", pr_manifest.get("lineage", {}),
            {"dataset": section_hash(cfg, "dataset"), "operator": section_hash(cfg, "operator")},
            args.force,
        )

    has_masks = dataset.cases[0].mask is not None
    arch = DenoiserConfig(
        signal_len=dataset.manifest["l"],
        base_channels=d.base_channels,
        channel_mults=d.channel_mults,
        cond_dim=d.cond_dim,
        use_prior=use_prior,
        use_mask=has_masks,
        attn_levels=d.attn_levels,
        head_dim=d.head_dim,
    )
    schedule = NoiseSchedule(sigma_min=d.sigma_min, sigma_max=d.sigma_max, rho=d.rho,
                             sigma_data=d.sigma_data, n_steps=d.n_steps)
    train_cfg = DiffusionTrainConfig(
        steps=d.steps, batch_size=d.batch_size, lr=d.lr, p_uncond=d.p_uncond,
        guidance_scale=d.guidance_scale, sigma_mean=d.sigma_mean, sigma_std=d.sigma_std,
        grad_clip=d.grad_clip,
    )
    model, history = train_diffusion(dataset, priors, target_mode, arch, schedule, train_cfg, seed=d.seed)
    lineage = {"dataset": section_hash(cfg, "dataset"), "diffusion": section_hash(cfg, "diffusion")}
    if use_prior:
        lineage["operator"] = section_hash(cfg, "operator")
    save_diffusion(ws.diffusion(variant), model, history, seed=d.seed, lineage=lineage)
    print(f"wrote {manifest_path(ws.diffusion(variant))}: variant {variant}, "
          f"final loss {history[-1]:.6f} after {len(history)} steps")


def _load_for_sampling(args, cfg, ws, variant):
    target_mode, use_prior = VARIANT_MODES[variant]
    needed = {"dataset": ws.dataset, f"diffusion-{variant}": ws.diffusion(variant)}
    if use_prior:
        needed["priors"] = ws.priors
    _require_artifacts(needed)
    dataset = load_dataset(ws.dataset)
    model, ck_manifest = load_diffusion(ws.diffusion(variant))
    if model.target_mode != target_mode or model.net.config.use_prior != use_prior:
        raise LineageError(
            f"checkpoint at {ws.diffusion(variant)} was trained as "
            f"({model.target_mode}, prior={model.net.config.use_prior}), not as variant {variant}"
        )
    expected = {
        "dataset": section_hash(cfg, "dataset"),
        "operator": section_hash(cfg, "operator"),
        "diffusion": section_hash(cfg, "diffusion"),
    }
    _check_lineage("dataset", dataset.manifest.get("lineage", {}), expected, args.force)
    _check_lineage(f"diffusion-{variant}", ck_manifest.get("lineage", {}), expected, args.force)
    priors = None
    if use_prior:
        priors, pr_manifest = load_priors(ws.priors)
        _check_lineage("priors", pr_manifest.get("lineage", {}), expected, args.force)
    return dataset, model, priors


def cmd_sample(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    variant = _resolve_variant(args, cfg)
    # The diffusion section hash must match the checkpoint being sampled.
    cfg.diffusion.target_mode, cfg.diffusion.use_prior = VARIANT_MODES[variant]
    dataset, model, priors = _load_for_sampling(args, cfg, ws, variant)

    _, test = dataset.split()
    if args.cases:
        wanted = [int(s) for s in args.cases.split(",")]
        test = [i for i in test if i in wanted] or wanted
    base_seed = args.seed if args.seed is not None else cfg.eval.base_seed
    signals = np.stack([dataset.cases[i].signal.values for i in test])
    prior_arr = None
    if priors is not None:
        prior_arr = np.stack([priors[dataset.cases[i].case_id].data for i in test])
    masks = None
    if dataset.cases[0].mask is not None and model.net.config.use_mask:
        masks = np.stack([dataset.cases[i].mask.data for i in test]).astype(np.float32)

    man = dataset.manifest
    videos = sample_videos(
        model, signals, prior_arr, masks, case_indices=test, base_seed=base_seed,
        guidance_scale=cfg.eval.guidance_scale, batch_size=cfg.eval.sample_batch,
        video_shape=(man["T"], man["H"], man["W"]),
    )
    prefix = ws.samples(variant)
    sha = write_blob(blob_path(prefix, "fields"), [videos.astype(np.float32)])
    body = {
        "variant": variant,
        "case_ids": [dataset.cases[i].case_id for i in test],
        "shape": list(videos.shape),
        "base_seed": base_seed,
        "blobs": {"fields": {"shape": list(videos.shape), "sha256": sha}},
        "lineage": {
            "dataset": section_hash(cfg, "dataset"),
            "operator": section_hash(cfg, "operator"),
            "diffusion": section_hash(cfg, "diffusion"),
        },
    }
    write_manifest(manifest_path(prefix), SAMPLES_FORMAT, body)
    print(f"wrote {manifest_path(prefix)}: {videos.shape[0]} videos, base seed {base_seed}")


def cmd_evaluate(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    variants = cfg.eval.variants
    needed = {"dataset": ws.dataset}
    diffusion_variants = [v for v in variants if v != "sdon"]
    if "sdon" in variants or any(VARIANT_MODES[v][1] for v in diffusion_variants):
        needed["priors"] = ws.priors
    for v in diffusion_variants:
        needed[f"diffusion-{v}"] = ws.diffusion(v)
    _require_artifacts(needed)

    dataset = load_dataset(ws.dataset)
    expected = {"dataset": section_hash(cfg, "dataset"), "operator": section_hash(cfg, "operator")}
    _check_lineage("dataset", dataset.manifest.get("lineage", {}), expected, args.force)
    priors = None
    if "priors" in needed:
        priors, pr_manifest = load_priors(ws.priors)
        _check_lineage("priors", pr_manifest.get("lineage", {}), expected, args.force)

    models = {}
    for v in diffusion_variants:
        cfg.diffusion.target_mode, cfg.diffusion.use_prior = VARIANT_MODES[v]
        model, ck_manifest = load_diffusion(ws.diffusion(v))
        _check_lineage(
            f"diffusion-{v}", ck_manifest.get("lineage", {}),
            dict(expected, diffusion=section_hash(cfg, "diffusion")), args.force,
        )
        models[v] = model

    base_seed = args.seed if args.seed is not None else cfg.eval.base_seed
    report = ablation.run_ablation(
        dataset, priors, models, ws.eval_dir,
        base_seed=base_seed,
        guidance_scale=cfg.eval.guidance_scale,
        ensemble=cfg.eval.ensemble,
        variants=variants,
        sample_batch=cfg.eval.sample_batch,
    )
    print(ablation.format_report_table(report))
    print(f"wrote {ws.eval_dir}/report.json and per_case.csv")


def cmd_report(args: argparse.Namespace, cfg: PipelineConfig, ws: Workspace) -> None:
    path = ws.eval_dir / "report.json"
    if not path.exists():
        raise PreconditionError(f"no report at {path}; run evaluate first")
    report = ablation.AblationReport(variants=json.loads(path.read_text())["variants"])
    print(ablation.format_report_table(report))
    for f in sorted(ws.eval_dir.iterdir()):
        print(f"  {f}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-operator": cmd_train_operator,
    "export-priors": cmd_export_priors,
    "train-diffusion": cmd_train_diffusion,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prior-refine", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the stage seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes where supported")
        p.add_argument("--out", default=None, help="output root (else $PRIOR_REFINE_OUT, else ./out)")
        p.add_argument("--force", action="store_true", help="proceed despite lineage mismatches")
        if name in ("train-diffusion", "sample"):
            p.add_argument("--variant", choices=sorted(VARIANT_MODES), default=None)
            p.add_argument("--target", choices=("full", "residual"), default=None)
        if name == "sample":
            p.add_argument("--cases", default=None, help="comma-separated case indices (default: test split)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        import torch

        torch.set_num_threads(max(1, args.jobs))
        cfg = load_config(args.config)
        ws = Workspace(_resolve_out(args.out))
        started = time.monotonic()
        COMMANDS[args.command](args, cfg, ws)
        _write_runlog(ws, args.command, config_hash(cfg), args.seed, started, args)
    except PriorRefineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
