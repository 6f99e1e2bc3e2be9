"""Evaluation report rendering: aligned text table, per-object CSV, figures.

Table columns follow the usual benchmark order; RMSE(T) is displayed x1e-2
and chamfer x1e-3 (raw values live in the JSON).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

TABLE_COLUMNS = ["RMSE(R) deg", "RMSE(T) x1e-2", "PA %", "CD x1e-3"]


def report_table(report: EvalReport) -> str:
    rows = [("overall", report.rmse_r_deg, report.rmse_t, report.part_accuracy_pct, report.chamfer)]
    by_cat = {}
    for o in report.per_object:
        by_cat.setdefault(o.category, []).append(o)
    for cat in sorted(by_cat):
        objs = by_cat[cat]
        rows.append(
            (
                cat,
                float(np.mean([o.rmse_r_deg for o in objs])),
                float(np.mean([o.rmse_t for o in objs])),
                float(np.mean([o.part_accuracy_pct for o in objs])),
                float(np.mean([o.chamfer for o in objs])),
            )
        )
    header = f"{'subset':<12}" + "".join(f"{c:>16}" for c in TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, r, t, pa, cd in rows:
        lines.append(f"{name:<12}{r:>16.2f}{t * 100:>16.2f}{pa:>16.2f}{cd * 1000:>16.3f}")
    return "\n".join(lines)


def write_report_files(report: EvalReport, out_dir, stem: str = "report") -> dict:
    """Write JSON + text table + per-object CSV + figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    jpath = out / f"{stem}.json"
    jpath.write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))
    paths["json"] = jpath

    tpath = out / f"{stem}.txt"
    tpath.write_text(report_table(report) + "\n")
    paths["table"] = tpath

    cpath = out / f"{stem}.csv"
    with open(cpath, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["id", "category", "n_fragments", "rmse_r_deg", "rmse_r_euler_deg",
             "rmse_r_geodesic_deg", "rmse_t", "part_accuracy_pct", "chamfer"]
        )
        for o in report.per_object:
            writer.writerow(
                [o.id, o.category, o.n_fragments, f"{o.rmse_r_deg:.6f}",
                 f"{o.rmse_r_euler_deg:.6f}", f"{o.rmse_r_geodesic_deg:.6f}",
                 f"{o.rmse_t:.6f}", f"{o.part_accuracy_pct:.2f}", f"{o.chamfer:.8f}"]
            )
    paths["csv"] = cpath

    paths["fig_summary"] = _figure_summary(report, out / f"{stem}_summary.png")
    paths["fig_by_count"] = _figure_by_fragment_count(report, out / f"{stem}_by_count.png")
    paths["fig_rotation"] = _figure_rotation_hist(report, out / f"{stem}_rotation_hist.png")
    return paths


def _figure_summary(report: EvalReport, path) -> Path:
    by_cat = {}
    for o in report.per_object:
        by_cat.setdefault(o.category, []).append(o)
    cats = sorted(by_cat)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    pa = [np.mean([o.part_accuracy_pct for o in by_cat[c]]) for c in cats]
    rr = [np.mean([o.rmse_r_geodesic_deg for o in by_cat[c]]) for c in cats]
    axes[0].bar(cats, pa, color="#4878cf")
    axes[0].axhline(report.part_accuracy_pct, color="k", lw=1, ls="--", label="overall")
    axes[0].set_ylabel("part accuracy [%]")
    axes[0].set_ylim(0, 105)
    axes[0].legend(frameon=False, fontsize=8)
    axes[1].bar(cats, rr, color="#d65f5f")
    axes[1].axhline(report.rmse_r_geodesic_deg, color="k", lw=1, ls="--")
    axes[1].set_ylabel("geodesic RMSE(R) [deg]")
    for ax in axes:
        ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def _figure_by_fragment_count(report: EvalReport, path) -> Path:
    counts = sorted({o.n_fragments for o in report.per_object})
    pa = [
        np.mean([o.part_accuracy_pct for o in report.per_object if o.n_fragments == n])
        for n in counts
    ]
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.plot(counts, pa, "o-", color="#4878cf")
    ax.set_xlabel("fragments per object")
    ax.set_ylabel("part accuracy [%]")
    ax.set_ylim(0, 105)
    ax.set_xticks(counts)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def _figure_rotation_hist(report: EvalReport, path) -> Path:
    vals = [o.rmse_r_geodesic_deg for o in report.per_object]
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.hist(vals, bins=24, color="#6acc65", edgecolor="k", lw=0.4)
    ax.set_xlabel("per-object geodesic RMSE(R) [deg]")
    ax.set_ylabel("objects")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def write_training_curve(log_path, out_path, keys=("fm_loss", "val_fm_loss")) -> Path | None:
    """Loss-curve figure from a JSON-lines training log; returns None when the
    log holds none of the requested keys."""
    records = []
    p = Path(log_path)
    if p.exists():
        for line in p.read_text().splitlines():
            line = line.strip()
            if line:
                records.append(json.loads(line))
    series = {k: [(r["epoch"], r[k]) for r in records if k in r] for k in keys}
    series = {k: v for k, v in series.items() if v}
    if not series:
        return None
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    for k, pts in series.items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, label=k)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return Path(out_path)
