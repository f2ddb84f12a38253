"""Report rendering: one CSV of per-run records, a JSON summary, and
matplotlib figures for the round and size profiles.

matplotlib is imported lazily with the Agg backend so library users never
pay for it and no display is required.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .models import size_distribution
from .samplers import STATUS_FAILED

CSV_FIELDS = (
    "run",
    "seed",
    "status",
    "size",
    "adaptive_rounds",
    "proposal_work",
    "max_width",
    "eps",
)


def write_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(
                {
                    "run": rec["run"],
                    "seed": rec["seed"],
                    "status": rec["status"],
                    "size": len(rec["sample"]),
                    "adaptive_rounds": rec["adaptive_rounds"],
                    "proposal_work": rec["proposal_work"],
                    "max_width": rec["max_width"],
                    "eps": rec.get("eps", ""),
                }
            )


def build_summary(model, records) -> dict:
    rounds = [r["adaptive_rounds"] for r in records]
    work = [r["proposal_work"] for r in records]
    return {
        "command": records[0]["command"] if records else "",
        "digest": records[0]["digest"] if records else "",
        "n_runs": len(records),
        "failures": sum(1 for r in records if r["status"] == STATUS_FAILED),
        "rounds_mean": float(np.mean(rounds)) if rounds else 0.0,
        "rounds_max": int(max(rounds)) if rounds else 0,
        "work_mean": float(np.mean(work)) if work else 0.0,
        "work_max": int(max(work)) if work else 0,
        "width_max": int(max((r["max_width"] for r in records), default=0)),
    }


def _render_figures(out_dir, model, records):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    rounds = np.array([r["adaptive_rounds"] for r in records])
    sizes = np.array([len(r["sample"]) for r in records])

    fig, ax = plt.subplots(figsize=(5, 3.2))
    lo, hi = int(rounds.min()), int(rounds.max())
    ax.hist(rounds, bins=np.arange(lo, hi + 2) - 0.5, color="#4878d0", edgecolor="white")
    ax.set_xlabel("adaptive rounds")
    ax.set_ylabel("runs")
    ax.set_title("round profile")
    fig.tight_layout()
    p = os.path.join(out_dir, "rounds.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    top = int(sizes.max()) if len(sizes) else 0
    grid = np.arange(top + 2)
    observed = np.array([(sizes == j).sum() for j in grid])
    ax.bar(grid, observed, color="#4878d0", label="observed")
    if model.constraint is None and model.n <= 20:
        expected = size_distribution(model) * len(records)
        ax.plot(
            np.arange(len(expected)),
            expected,
            "o-",
            color="#d65f5f",
            label="exact law",
        )
        ax.legend()
    ax.set_xlabel("sample size")
    ax.set_ylabel("runs")
    ax.set_title("size profile")
    fig.tight_layout()
    p = os.path.join(out_dir, "sizes.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def write_report(out_dir, model, records) -> list[str]:
    """Write runs.csv, summary.json, and the figures; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "runs.csv")
    write_csv(csv_path, records)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(build_summary(model, records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths = [csv_path, summary_path]
    if records:
        paths.extend(_render_figures(out_dir, model, records))
    return paths
