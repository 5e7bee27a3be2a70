"""Figure rendering for run outputs.

Everything here draws from the delimited files a run already wrote, never
from in-memory state, so any shipped output directory can be re-rendered.
PNGs land next to the CSVs unless an explicit output directory is given.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first

_DPI = 150


def _read_csv(path: str) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _float(cell: str) -> float:
    return float(cell) if cell not in ("", None) else float("nan")


def render_angle_densities(kde_csv: str, aggregates_csv: str | None, out_path: str) -> str:
    """Angle KDE per spike index with dashed lines at the predicted limits."""
    curves: dict[int, list[tuple[float, float]]] = defaultdict(list)
    for row in _read_csv(kde_csv):
        curves[int(row["index"])].append((_float(row["grid_deg"]), _float(row["density"])))

    predicted: dict[int, float] = {}
    if aggregates_csv and os.path.exists(aggregates_csv):
        for row in _read_csv(aggregates_csv):
            if row["metric"].startswith("angle_") and row.get("predicted"):
                predicted.setdefault(int(row["index"]), _float(row["predicted"]))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for index in sorted(curves):
        pts = curves[index]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"index {index}")
        if index in predicted:
            ax.axvline(predicted[index], linestyle="--", linewidth=1.0, color="gray")
    ax.set_xlabel("angle to population direction (degrees)")
    ax.set_ylabel("density")
    ax.set_title("Replication angle densities with predicted limits")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def render_ratio_histograms(replications_csv: str, out_path: str) -> str:
    """Eigenvalue-ratio histograms per monitored index."""
    values: dict[int, list[float]] = defaultdict(list)
    for row in _read_csv(replications_csv):
        values[int(row["index"])].append(_float(row["eigenvalue_ratio"]))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for index in sorted(values):
        ax.hist(values[index], bins=30, density=True, alpha=0.55, label=f"index {index}")
    ax.set_xlabel("eigenvalue ratio")
    ax.set_ylabel("density")
    ax.set_title("Replication eigenvalue ratios")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def render_pairwise(pairwise_csv: str, out_path: str) -> str:
    """Mean pairwise angle per spike index with a right-angle reference."""
    rows = _read_csv(pairwise_csv)
    indices = [int(r["index"]) for r in rows]
    means = [_float(r["mean_pairwise_deg"]) for r in rows]
    stds = [_float(r["std_pairwise_deg"]) for r in rows]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(indices, means, yerr=stds, fmt="o", capsize=4)
    ax.axhline(90.0, linestyle="--", linewidth=1.0, color="gray")
    ax.set_xlabel("spike index")
    ax.set_ylabel("pairwise angle across replications (degrees)")
    ax.set_title("Pairwise angles between replicated eigenvectors")
    ax.set_xticks(indices)
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def render_sweep(sweep_csv: str, out_path: str) -> str:
    """Angle deviation against n, one line per spike index, log-log axes."""
    by_index: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for row in _read_csv(sweep_csv):
        by_index[int(row["index"])].append(
            (int(row["n"]), _float(row["mean_abs_angle_dev_deg"]))
        )

    fig, ax = plt.subplots(figsize=(6, 4))
    for index in sorted(by_index):
        pts = sorted(by_index[index])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"index {index}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sample size n")
    ax.set_ylabel("mean |angle - limit| (degrees)")
    ax.set_title("Angle convergence at fixed d/n")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def render_directory(directory: str, out_dir: str | None = None) -> list[str]:
    """Render every figure the CSVs in ``directory`` support.

    Looks for replications.csv, aggregates.csv, kde.csv, pairwise.csv, and
    convergence.csv; returns the list of PNG paths written.
    """
    out_dir = out_dir or directory
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    kde_csv = os.path.join(directory, "kde.csv")
    aggregates_csv = os.path.join(directory, "aggregates.csv")
    if os.path.exists(kde_csv):
        written.append(
            render_angle_densities(
                kde_csv,
                aggregates_csv if os.path.exists(aggregates_csv) else None,
                os.path.join(out_dir, "angle_densities.png"),
            )
        )
    replications_csv = os.path.join(directory, "replications.csv")
    if os.path.exists(replications_csv):
        written.append(
            render_ratio_histograms(
                replications_csv, os.path.join(out_dir, "eigenvalue_ratios.png")
            )
        )
    pairwise_csv = os.path.join(directory, "pairwise.csv")
    if os.path.exists(pairwise_csv):
        written.append(
            render_pairwise(pairwise_csv, os.path.join(out_dir, "pairwise_angles.png"))
        )
    sweep_csv = os.path.join(directory, "convergence.csv")
    if os.path.exists(sweep_csv):
        written.append(render_sweep(sweep_csv, os.path.join(out_dir, "convergence.png")))
    return written
