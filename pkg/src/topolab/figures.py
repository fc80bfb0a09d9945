"""Matplotlib renderings of densities and run histories, written to files.

Forces the Agg backend on import: these helpers exist for headless report
generation next to the CSV outputs, not for interactive use.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mesh import MeshModel

if TYPE_CHECKING:
    from .diagnostics import ComparisonTable
    from .optimizer import RunRecord

_DPI = 150


def save_density_figure(
    field: np.ndarray, mesh: MeshModel, path: str | Path, title: str | None = None
) -> Path:
    """Grayscale density image, solid black, y up, one pixel per element."""
    field = np.asarray(field, dtype=float)
    grid = field.reshape(mesh.ny, mesh.nx)
    width = 6.4
    height = max(1.2, width * mesh.ny / mesh.nx)
    fig, ax = plt.subplots(figsize=(width, height))
    ax.imshow(
        1.0 - grid,
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        origin="lower",
        extent=(0.0, mesh.nx * mesh.h, 0.0, mesh.ny * mesh.h),
        interpolation="nearest",
    )
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)


def save_history_figure(record: "RunRecord", path: str | Path) -> Path:
    """Compliance and step-size traces with stage boundaries marked."""
    its = [r.iteration for r in record.history]
    comp = [r.compliance for r in record.history]
    change = [r.max_change for r in record.history]
    stages = [r.stage for r in record.history]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 6.0))
    ax1.semilogy(its, comp, color="tab:blue", lw=1.5)
    ax1.set_ylabel("compliance")
    ax1.grid(True, which="both", alpha=0.3)
    for k in range(1, len(its)):
        if stages[k] != stages[k - 1]:
            for ax in (ax1, ax2):
                ax.axvline(its[k], color="0.6", ls="--", lw=0.8)
    ax2.semilogy(its, change, color="tab:red", lw=1.2, label="max density change")
    ax2.axhline(
        record.schedule.stage_convergence_tol, color="0.4", ls=":", lw=1.0,
        label="stage tolerance",
    )
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("max density change")
    ax2.grid(True, which="both", alpha=0.3)
    ax2.legend(loc="upper right", fontsize=8)
    ax1.set_title(f"{record.label}: {len(its)} iterations")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)


def save_comparison_figure(table: "ComparisonTable", path: str | Path) -> Path:
    """Bar chart of raw and thresholded compliance per run."""
    labels = [r.label for r in table.runs]
    raw = [r.compliance for r in table.runs]
    thr = [r.compliance_thresholded for r in table.runs]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(labels)), 4.2))
    ax.bar(x - 0.2, raw, width=0.4, label="final", color="tab:blue")
    ax.bar(x + 0.2, thr, width=0.4, label="thresholded", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("compliance")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)
