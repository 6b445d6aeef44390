"""Four-variant ablation runner: prior alone, diffusion without prior,
prior-conditioned full-field, and prior-conditioned residual.

Evaluates the test split only, one sample per case with a fixed per-case
seed (ensemble mode behind a flag averages several seeds). Emits report.json,
per_case.csv, per-metric histograms (log x-axis when the error spread is
wide), and side-by-side field/residual panels for the best/median/worst
prior cases.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import containers, metrics
from .diffusion.training import sample_videos
from .errors import ConfigError, InvalidArgumentError

log = logging.getLogger(__name__)

VARIANTS = ("sdon", "vd-np", "vd-pc-d", "vd-pc-r")
_HIST_LOG_RATIO = 50.0

# deterministic plot output: no creation dates, stable SVG element ids
matplotlib.rcParams["svg.hashsalt"] = "prior-refine"
_PLOT_METADATA = {"png": {"Software": "prior-refine"}, "svg": {"Date": None}}


@dataclass
class AblationReport:
    variants: dict

    def __post_init__(self):
        for name, row in self.variants.items():
            for block in ("percentiles_rel_l2", "percentiles_rmae"):
                p = row[block]
                order = [p["best"], p["p25"], p["p50"], p["p75"], p["worst"]]
                if any(a > b + 1e-12 for a, b in zip(order, order[1:])):
                    raise InvalidArgumentError(f"{name}: non-monotone percentiles in {block}")

    def to_dict(self):
        return {"variants": self.variants}


def _variant_predictions(variant, model, test_cases, test_indices, priors_by_id,
                         base_seed, guidance_scale, ensemble, sample_batch):
    signals = np.stack([c.signal.values for c in test_cases])
    prior_stack = None
    if priors_by_id is not None:
        prior_stack = np.stack([priors_by_id[c.case_id].data for c in test_cases])
    if variant == "sdon":
        return prior_stack.copy()

    masks = None
    if model.net.config.use_mask:
        masks = np.stack([c.mask.data for c in test_cases])
    needs_prior = model.net.config.use_prior
    if needs_prior and prior_stack is None:
        raise ConfigError(f"variant {variant} conditions on priors but none were supplied")

    draws = []
    for member in range(ensemble):
        draws.append(sample_videos(
            model,
            signals,
            prior_stack if needs_prior else None,
            masks,
            case_indices=test_indices,
            base_seed=base_seed + member,
            guidance_scale=guidance_scale,
            batch_size=sample_batch,
            video_shape=test_cases[0].field.data.shape,
        ))
    return np.mean(draws, axis=0)


def run_ablation(dataset, priors_by_id, diffusion_models: dict, out_dir,
                 base_seed: int = 0, guidance_scale: float | None = None,
                 ensemble: int = 1, variants=VARIANTS, sample_batch: int = 8,
                 make_plots: bool = True) -> AblationReport:
    """diffusion_models maps variant name -> loaded Denoiser; 'sdon' needs
    only the priors. Returns the report and writes all output files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = list(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; expected subset of {VARIANTS}")
        if v != "sdon" and v not in diffusion_models:
            raise ConfigError(f"variant {v} requested but no checkpoint was supplied")
    if "sdon" in variants and priors_by_id is None:
        raise ConfigError("sdon variant needs exported priors")

    _, test_idx = dataset.split()
    test_cases = dataset.subset(test_idx)
    gts = [c.field.data for c in test_cases]

    rows = []
    report_variants = {}
    for variant in variants:
        model = diffusion_models.get(variant)
        preds = _variant_predictions(variant, model, test_cases, test_idx, priors_by_id,
                                     base_seed, guidance_scale, ensemble, sample_batch)
        errs = [
            metrics.case_errors(c.case_id, gt, pred)
            for c, gt, pred in zip(test_cases, gts, preds)
        ]
        rows.extend((variant, e) for e in errs)
        rl2 = [e.rel_l2 for e in errs]
        rl1 = [e.rmae for e in errs]
        report_variants[variant] = {
            "n_cases": len(errs),
            "mean_rel_l2": float(np.mean(rl2)),
            "mean_rmae": float(np.mean(rl1)),
            "mean_mae": float(np.mean([e.mae for e in errs])),
            "percentiles_rel_l2": metrics.percentile_report(rl2),
            "percentiles_rmae": metrics.percentile_report(rl1),
            "flagged_frames": int(sum(e.flagged_frames for e in errs)),
        }
        log.info("variant %-8s mean rel_l2 %.4f rmae %.4f", variant,
                 report_variants[variant]["mean_rel_l2"], report_variants[variant]["mean_rmae"])

    report = AblationReport(variants=report_variants)
    containers.atomic_write_json(out_dir / "report.json", report.to_dict())
    _write_csv(out_dir / "per_case.csv", rows)
    if make_plots:
        for metric_name in ("rel_l2", "rmae", "mae"):
            _histogram(out_dir, metric_name, rows)
        if "sdon" in variants and priors_by_id is not None:
            _panels(out_dir, test_cases, priors_by_id,
                    [e for v, e in rows if v == "sdon"])
    return report


def _write_csv(path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "variant", "rel_l2", "rmae", "mae"])
    for variant, e in rows:
        writer.writerow([e.case_id, variant, f"{e.rel_l2:.10g}", f"{e.rmae:.10g}", f"{e.mae:.10g}"])
    containers.atomic_write_bytes(path, buf.getvalue().encode())


def _histogram(out_dir: Path, metric_name: str, rows) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    by_variant = {}
    for variant, e in rows:
        by_variant.setdefault(variant, []).append(getattr(e, metric_name))
    finite = [v for vals in by_variant.values() for v in vals if np.isfinite(v) and v > 0]
    log_x = bool(finite) and max(finite) / max(min(finite), 1e-300) > _HIST_LOG_RATIO
    if log_x:
        bins = np.logspace(np.log10(min(finite)), np.log10(max(finite)), 24)
        ax.set_xscale("log")
    else:
        hi = max(finite) if finite else 1.0
        bins = np.linspace(0.0, hi * 1.05, 24)
    for variant in VARIANTS:
        if variant in by_variant:
            vals = [v for v in by_variant[variant] if np.isfinite(v)]
            ax.hist(vals, bins=bins, alpha=0.55, label=variant)
    ax.set_xlabel(metric_name)
    ax.set_ylabel("cases")
    ax.legend()
    fig.tight_layout()
    for ext in ("png", "svg"):
        fig.savefig(out_dir / f"hist_{metric_name}.{ext}", metadata=_PLOT_METADATA[ext])
    plt.close(fig)


def _panels(out_dir: Path, test_cases, priors_by_id, sdon_errors) -> None:
    """Ground truth / prior / residual panels for best, median, worst cases
    ranked by the prior's rel_l2 (final frame shown)."""
    order = np.argsort([e.rel_l2 for e in sdon_errors])
    picks = [("best", order[0]), ("median", order[len(order) // 2]), ("worst", order[-1])]
    fig, axes = plt.subplots(3, 3, figsize=(9, 9))
    for row, (label, ix) in enumerate(picks):
        case = test_cases[ix]
        gt = case.field.data[-1]
        prior = priors_by_id[case.case_id].data[-1]
        resid = gt - prior
        vmax = max(abs(gt).max(), abs(prior).max(), 1e-12)
        for col, (img, title, kw) in enumerate([
            (gt, "ground truth", {"vmin": -vmax, "vmax": vmax, "cmap": "RdBu_r"}),
            (prior, "prior", {"vmin": -vmax, "vmax": vmax, "cmap": "RdBu_r"}),
            (np.abs(resid), "|residual|", {"cmap": "magma"}),
        ]):
            ax = axes[row, col]
            ax.imshow(img, origin="lower", **kw)
            ax.set_xticks([])
            ax.set_yticks([])
            if row == 0:
                ax.set_title(title)
            if col == 0:
                ax.set_ylabel(f"{label}\n{case.case_id}", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "panels_sdon.png", metadata=_PLOT_METADATA["png"])
    plt.close(fig)


def format_report_table(report: AblationReport) -> str:
    """Human-readable summary: one row per variant, mean metrics plus the
    rel_l2 percentile spread."""
    lines = [
        f"{'variant':10s} {'mean relL2':>11s} {'mean RMAE':>10s} {'mean MAE':>10s}   "
        f"{'best':>8s} {'p25':>8s} {'p50':>8s} {'p75':>8s} {'worst':>8s}"
    ]
    for name, row in report.variants.items():
        p = row["percentiles_rel_l2"]
        lines.append(
            f"{name:10s} {row['mean_rel_l2']:11.4%} {row['mean_rmae']:10.4%} "
            f"{row['mean_mae']:10.4g}   "
            f"{p['best']:8.3%} {p['p25']:8.3%} {p['p50']:8.3%} {p['p75']:8.3%} {p['worst']:8.3%}"
        )
    return "\n".join(lines)
