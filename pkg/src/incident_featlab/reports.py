"""Report serialization and figure rendering.

CSV is the canonical output (one row per persistence level, repeat-aggregate
statistics); JSON carries full per-repeat detail. Figures are rendered next
to the delimited output as PNG files. Floats are written with repr so equal
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

from .datamodel import PairConfig
from .experiments import ExperimentReport, trend_summary
from .evaluation import Metrics

REPORT_CSV_COLUMNS = (
    "mode", "pair", "pt",
    "dr_mean", "dr_std", "far_mean", "far_std",
    "mttd_mean", "mttd_std", "pi_mean", "pi_std",
    "cr_mean", "cr_std", "feature_dim",
)

PAIR_GRID_CSV_COLUMNS = (
    "mode", "pair", "pt", "dr", "far", "mttd", "pi", "cr", "feature_dim",
)


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _metrics_dict(m: Metrics) -> dict:
    return {
        "pt": m.pt,
        "dr": m.dr,
        "far": m.far,
        "mttd": m.mttd,
        "mttd_effective": m.mttd_effective,
        "pi": m.pi,
        "cr": m.cr,
    }


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "mode": report.mode,
        "pair": str(report.pair),
        "repeats": report.repeats,
        "pt_levels": list(report.pt_levels),
        "feature_dim": report.feature_dim,
        "aggregates": {
            str(pt): {
                "dr_mean": s.dr_mean, "dr_std": s.dr_std,
                "far_mean": s.far_mean, "far_std": s.far_std,
                "mttd_mean": s.mttd_mean, "mttd_std": s.mttd_std,
                "pi_mean": s.pi_mean, "pi_std": s.pi_std,
                "cr_mean": s.cr_mean, "cr_std": s.cr_std,
            }
            for pt, s in report.aggregates.items()
        },
        "repeats_detail": [
            {
                "seed": r.seed,
                "best_c": r.best_hyperparams.c,
                "best_gamma": r.best_hyperparams.gamma,
                "cv_pi": r.cv_pi,
                "metrics": {str(pt): _metrics_dict(m) for pt, m in r.metrics.items()},
            }
            for r in report.results
        ],
    }


def write_report_json(report: ExperimentReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True), encoding="utf-8"
    )


def write_report_csv(reports: Sequence[ExperimentReport], path: str | Path) -> None:
    """One row per report x persistence level."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_COLUMNS)
        for report in reports:
            for pt in report.pt_levels:
                s = report.aggregates[pt]
                writer.writerow(
                    [
                        report.mode, str(report.pair), pt,
                        _fmt(s.dr_mean), _fmt(s.dr_std),
                        _fmt(s.far_mean), _fmt(s.far_std),
                        _fmt(s.mttd_mean), _fmt(s.mttd_std),
                        _fmt(s.pi_mean), _fmt(s.pi_std),
                        _fmt(s.cr_mean), _fmt(s.cr_std),
                        report.feature_dim,
                    ]
                )


def write_pair_grid_csv(
    rows: Sequence[tuple[PairConfig, ExperimentReport]], path: str | Path
) -> None:
    """Flat single-value table for the raw-feature pair sweep."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIR_GRID_CSV_COLUMNS)
        for pair, report in rows:
            for pt in report.pt_levels:
                s = report.aggregates[pt]
                writer.writerow(
                    [
                        report.mode, str(pair), pt,
                        _fmt(s.dr_mean), _fmt(s.far_mean), _fmt(s.mttd_mean),
                        _fmt(s.pi_mean), _fmt(s.cr_mean), report.feature_dim,
                    ]
                )


def write_metrics_csv(metrics: Mapping[int, Metrics], path: str | Path) -> None:
    """Per-pt metrics for a single evaluated model."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("pt", "dr", "far", "mttd", "pi", "cr"))
        for pt in sorted(metrics):
            m = metrics[pt]
            writer.writerow(
                [
                    pt, _fmt(m.dr), _fmt(m.far),
                    _fmt(m.mttd) if m.mttd is not None else "",
                    _fmt(m.pi), _fmt(m.cr),
                ]
            )


# ---------------------------------------------------------------------------
# Figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_experiment_figures(report: ExperimentReport, outdir: str | Path) -> list[Path]:
    """DR/MTTD against FAR across persistence levels, plus per-pt panels."""
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pts = list(report.pt_levels)
    agg = [report.aggregates[pt] for pt in pts]
    fars = [s.far_mean for s in agg]
    written = []

    for metric, label, fname in (
        ("dr", "DR", "dr_vs_far.png"),
        ("mttd", "MTTD (30-s intervals)", "mttd_vs_far.png"),
    ):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ys = [getattr(s, f"{metric}_mean") for s in agg]
        errs = [getattr(s, f"{metric}_std") for s in agg]
        ax.errorbar(fars, ys, yerr=errs, marker="o", capsize=3)
        for pt, x_val, y_val in zip(pts, fars, ys):
            if not (math.isnan(x_val) or math.isnan(y_val)):
                ax.annotate(f"pt={pt}", (x_val, y_val), textcoords="offset points", xytext=(5, 5))
        ax.set_xlabel("FAR")
        ax.set_ylabel(label)
        ax.set_title(f"{report.mode} [{report.pair}], {report.repeats} repeat(s)")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = outdir / fname
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    fig, axes = plt.subplots(2, 2, figsize=(8.0, 6.0), sharex=True)
    panels = (("dr", "DR"), ("far", "FAR"), ("mttd", "MTTD"), ("pi", "PI"))
    for ax, (metric, label) in zip(axes.ravel(), panels):
        ys = [getattr(s, f"{metric}_mean") for s in agg]
        errs = [getattr(s, f"{metric}_std") for s in agg]
        ax.errorbar(pts, ys, yerr=errs, marker="o", capsize=3)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("persistence level")
    fig.suptitle(f"{report.mode} [{report.pair}]")
    fig.tight_layout()
    path = outdir / "metrics_vs_pt.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def render_pair_grid_figures(
    rows: Sequence[tuple[PairConfig, ExperimentReport]], outdir: str | Path
) -> list[Path]:
    """FAR and MTTD per pair choice, one line per persistence level."""
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(rows, key=lambda item: (item[0].x + item[0].y))
    labels = [str(p) for p, _ in ordered]
    pts = list(ordered[0][1].pt_levels)
    written = []
    for metric, ylabel, fname in (
        ("far_mean", "FAR", "far_by_pair.png"),
        ("mttd_mean", "MTTD (30-s intervals)", "mttd_by_pair.png"),
    ):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        for pt in pts:
            ys = [getattr(rep.aggregates[pt], metric) for _, rep in ordered]
            ax.plot(labels, ys, marker="o", label=f"pt={pt}")
        ax.set_xlabel("[x-y] pair")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if len(pts) > 1:
            ax.legend()
        fig.tight_layout()
        path = outdir / fname
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_metrics_figure(metrics: Mapping[int, Metrics], outdir: str | Path) -> list[Path]:
    """Per-pt panel for a single evaluated model."""
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pts = sorted(metrics)
    fig, axes = plt.subplots(2, 2, figsize=(8.0, 6.0), sharex=True)
    panels = (
        ("dr", "DR"), ("far", "FAR"), ("mttd_effective", "MTTD"), ("pi", "PI"),
    )
    for ax, (attr, label) in zip(axes.ravel(), panels):
        ax.plot(pts, [getattr(metrics[pt], attr) for pt in pts], marker="o")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("persistence level")
    fig.tight_layout()
    path = outdir / "metrics_vs_pt.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def format_trend(rows: Sequence[tuple[PairConfig, ExperimentReport]], pt: int = 0) -> str:
    """Human-readable FAR/MTTD direction summary for the pair sweep."""
    t = trend_summary(rows, pt)
    lines = [f"pair sweep at pt={pt}:"]
    for pair, far, mttd in zip(t["pairs"], t["far"], t["mttd"]):
        lines.append(f"  [{pair}] far={far:.6f} mttd={mttd:.3f}")
    lines.append(
        "  far non-increasing with window size: "
        + ("yes" if t["far_non_increasing"] else "no")
    )
    lines.append(
        "  mttd non-decreasing with window size: "
        + ("yes" if t["mttd_non_decreasing"] else "no")
    )
    return "\n".join(lines)
