"""Quick-look figures rendered next to the delimited output.

Reads the aggregate CSV the runner just wrote and draws one PNG per metric:
a mean curve per (strategy, alpha, gamma_over_n) group with a +-1 sample
standard deviation band.  The standalone front-end plotting tool consumes
the same CSVs; these are the runner's own report figures.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

METRICS = ("train_loss", "grad_norm_sq", "test_accuracy", "dist_sq")
LOG_SCALE = {"train_loss", "grad_norm_sq", "dist_sq"}


def _load_groups(agg_csv: Path):
    groups: dict = {}
    with open(agg_csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["strategy"], row["alpha"], row["gamma_over_n"])
            groups.setdefault(key, []).append(row)
    for rows in groups.values():
        rows.sort(key=lambda r: int(r["epoch"]))
    return groups


def render_aggregates(agg_csv, out_dir, metrics=METRICS) -> list:
    """One figure per metric with data; returns the files written."""
    agg_csv = Path(agg_csv)
    out_dir = Path(out_dir)
    groups = _load_groups(agg_csv)
    written = []
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
        has_data = False
        for key in sorted(groups):
            rows = [r for r in groups[key] if r.get(f"{metric}_mean")]
            if not rows:
                continue
            has_data = True
            epochs = [int(r["epoch"]) for r in rows]
            mean = [float(r[f"{metric}_mean"]) for r in rows]
            std = [float(r[f"{metric}_std"] or 0.0) for r in rows]
            label = f"{key[0]} a={key[1]} g/n={key[2]}"
            (line,) = ax.plot(epochs, mean, label=label, linewidth=1.4)
            ax.fill_between(
                epochs,
                [m - s for m, s in zip(mean, std)],
                [m + s for m, s in zip(mean, std)],
                alpha=0.2,
                color=line.get_color(),
                linewidth=0,
            )
        if not has_data:
            plt.close(fig)
            continue
        if metric in LOG_SCALE:
            ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend(fontsize=7)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(str(path))
    return written
