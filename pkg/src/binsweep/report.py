"""CSV summaries and rendered figures.

Everything here writes files: comma-separated tables for machine use and
matplotlib figures rendered straight to image files next to them.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_csv",
    "depth_figure",
    "loss_curve_figure",
    "compare_figure",
    "valid_fraction_figure",
    "error_histogram_figure",
    "fusion_figure",
]


def save_csv(path, header, rows) -> None:
    """Write one table; rows are sequences matching the header."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def depth_figure(path, depth: np.ndarray, confidence: np.ndarray | None = None,
                 title: str = "depth") -> None:
    """Depth map preview, with the confidence map alongside when given."""
    n = 2 if confidence is not None else 1
    fig, axes = plt.subplots(1, n, figsize=(5.2 * n, 4.2))
    axes = np.atleast_1d(axes)
    im = axes[0].imshow(depth, cmap="viridis")
    axes[0].set_title(title)
    fig.colorbar(im, ax=axes[0], shrink=0.8)
    if confidence is not None:
        im = axes[1].imshow(confidence, cmap="magma", vmin=0.0, vmax=1.0)
        axes[1].set_title("confidence")
        fig.colorbar(im, ax=axes[1], shrink=0.8)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    _save(fig, path)


def loss_curve_figure(path, history) -> None:
    """Mean stage loss per epoch."""
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    epochs = np.arange(1, len(history) + 1)
    values = [np.nan if v is None else v for v in history]
    ax.plot(epochs, values, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean stage loss")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def compare_figure(path, comparison) -> None:
    """Bars of hypothesis and peak-element budgets plus the agreement."""
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.8))
    names = ["staged", "binary", "dense"]
    colors = ["tab:blue", "tab:green", "tab:orange"]
    axes[0].bar(names, [comparison.staged_hypotheses_per_pixel,
                        comparison.binet_hypotheses_per_pixel,
                        comparison.dense_hypotheses_per_pixel],
                color=colors)
    axes[0].set_title("hypotheses per pixel")
    axes[1].bar(names, [comparison.staged_peak_elements,
                        comparison.binet_peak_elements,
                        comparison.dense_peak_elements],
                color=colors)
    axes[1].set_title("peak volume elements")
    axes[1].ticklabel_format(axis="y", style="sci", scilimits=(0, 0))
    for frac, name, color in ((comparison.stage_valid_fraction, "staged", colors[0]),
                              (comparison.binet_valid_fraction, "binary", colors[1])):
        if frac:
            axes[2].plot(np.arange(1, len(frac) + 1), frac, marker="o",
                         label=name, color=color)
    axes[2].set_ylim(0.0, 1.05)
    axes[2].set_title("fraction of pixels still in window")
    axes[2].set_xlabel("stage")
    axes[2].grid(True, alpha=0.3)
    axes[2].legend(fontsize=8)
    fig.suptitle(f"agreement {comparison.agreement:.4f} "
                 f"(element reduction {comparison.element_reduction:.1f}x)")
    _save(fig, path)


def valid_fraction_figure(path, fractions_by_name: dict) -> None:
    """Per-stage in-window fractions, one line per scene."""
    fig, ax = plt.subplots(figsize=(5.8, 3.8))
    for name, frac in fractions_by_name.items():
        ax.plot(np.arange(1, len(frac) + 1), frac, marker="o", label=name)
    ax.set_xlabel("stage")
    ax.set_ylabel("fraction in window")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def error_histogram_figure(path, errors: np.ndarray, title: str = "abs error") -> None:
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    finite = np.asarray(errors, dtype=np.float64).ravel()
    finite = finite[np.isfinite(finite)]
    ax.hist(finite, bins=60, color="tab:blue", alpha=0.85)
    ax.set_xlabel(title)
    ax.set_ylabel("pixels")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def fusion_figure(path, fused) -> None:
    """Fused depth, survivor mask and vote counts for one view."""
    fig, axes = plt.subplots(1, 3, figsize=(13.0, 3.8))
    im = axes[0].imshow(np.where(fused.mask, fused.depth, np.nan), cmap="viridis")
    axes[0].set_title("fused depth (kept pixels)")
    fig.colorbar(im, ax=axes[0], shrink=0.8)
    axes[1].imshow(fused.mask, cmap="gray", vmin=0, vmax=1)
    axes[1].set_title("kept mask")
    im = axes[2].imshow(fused.votes, cmap="plasma")
    axes[2].set_title("consistent views")
    fig.colorbar(im, ax=axes[2], shrink=0.8)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    _save(fig, path)
