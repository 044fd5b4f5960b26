"""Static PR-curve figures from ``pr_<type>.csv`` files."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_pr_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no PR rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in ("threshold", "P", "R", "F")}


def _iso_f(ax):
    for f in np.arange(0.1, 1.0, 0.1):
        r = np.linspace(f / (2 - f) + 1e-6, 1, 100)
        p = f * r / (2 * r - f)
        ax.plot(r, p, color="0.85", lw=0.6, zorder=0)


def _axes(title: str):
    fig, ax = plt.subplots(figsize=(4.5, 4.5), dpi=100)
    _iso_f(ax)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return fig, ax


def _label(name: str, curve) -> str:
    return f"{name} [F={curve['F'].max():.3f}]"


def plot_pr_csvs(paths: Sequence[str | Path], out_dir: str | Path) -> list[Path]:
    """One figure per CSV plus ``pr_all.png`` overlaying them. Returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = {Path(p).stem.removeprefix("pr_"): read_pr_csv(p) for p in paths}
    written = []
    for name, c in curves.items():
        fig, ax = _axes(name)
        ax.plot(c["R"], c["P"], lw=1.8, label=_label(name, c))
        ax.legend(loc="lower left", fontsize=8)
        path = out / f"pr_{name}.png"
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    fig, ax = _axes("all types")
    for name, c in curves.items():
        ax.plot(c["R"], c["P"], lw=1.5, label=_label(name, c))
    ax.legend(loc="lower left", fontsize=8)
    path = out / "pr_all.png"
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    written.append(path)
    return written
