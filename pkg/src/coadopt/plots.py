"""Figure rendering for simulation and sweep outputs.

Figures are rendered straight to files next to the CSV data they depict;
the CSV remains the canonical output and nothing here is interactive.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import AGGREGATE_COLUMNS


def plot_aggregates(aggregates: np.ndarray, path, title: str | None = None,
                    entry_times: dict[int, int] | None = None) -> None:
    """Two-panel view of the node-mean trajectory: compartments and opinions."""
    agg = np.asarray(aggregates)
    t = np.arange(agg.shape[0])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)

    styles = {
        "mean_s": dict(color="0.4", ls="--", label="susceptible"),
        "mean_a1": dict(color="tab:blue", label="adopters tech 1"),
        "mean_a2": dict(color="tab:red", label="adopters tech 2"),
        "mean_d1": dict(color="tab:blue", ls=":", label="dissatisfied tech 1"),
        "mean_d2": dict(color="tab:red", ls=":", label="dissatisfied tech 2"),
    }
    for name, style in styles.items():
        ax1.plot(t, agg[:, AGGREGATE_COLUMNS.index(name)], lw=1.4, **style)
    ax1.set_ylabel("population fraction")
    ax1.set_ylim(-0.02, 1.02)
    ax1.legend(loc="center right", fontsize=8)

    ax2.plot(t, agg[:, AGGREGATE_COLUMNS.index("mean_x1")], color="tab:blue",
             lw=1.4, label="opinion tech 1")
    ax2.plot(t, agg[:, AGGREGATE_COLUMNS.index("mean_x2")], color="tab:red",
             lw=1.4, label="opinion tech 2")
    ax2.set_xlabel("step")
    ax2.set_ylabel("mean opinion")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend(loc="center right", fontsize=8)

    for ax in (ax1, ax2):
        for tech, when in (entry_times or {}).items():
            ax.axvline(when, color="0.7", lw=0.8)
    if entry_times:
        for tech, when in entry_times.items():
            ax1.annotate(f"tech {tech} entry", (when, 0.95), fontsize=8, color="0.3")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(factors, mean_a1, mean_a2, share_ratio, path,
               param: str = "", mode: str = "") -> None:
    """Equilibrium adoption levels and share ratio across a parameter grid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(factors, mean_a1, "o-", color="tab:blue", label="mean adopters tech 1")
    ax1.plot(factors, mean_a2, "s-", color="tab:red", label="mean adopters tech 2")
    ax1.set_xlabel(f"{param} {mode}".strip() or "grid point")
    ax1.set_ylabel("equilibrium adoption")
    ax1.legend(fontsize=8)
    ax2.plot(factors, share_ratio, "d-", color="0.3")
    ax2.set_xlabel(f"{param} {mode}".strip() or "grid point")
    ax2.set_ylabel("share ratio (tech2 / tech1)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
