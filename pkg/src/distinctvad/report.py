"""Report rendering: side-by-side frame panels and the anomaly-weight trace."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import IngestError


def render_panel(
    original: np.ndarray,
    reconstruction: np.ndarray,
    residual: np.ndarray,
    path: str | Path,
    title: str = "",
) -> Path:
    """Write an (original | reconstruction | residual heat map) panel.

    ``original``/``reconstruction`` are (c, H, W) in [0, 1]; the residual is an
    (H, W) error map, clamped to [0, 1] for display.
    """
    path = Path(path)

    def to_image(frame: np.ndarray) -> np.ndarray:
        img = np.clip(frame, 0.0, 1.0)
        return img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)

    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    panels = [
        (to_image(original), "gray", "original"),
        (to_image(reconstruction), "gray", "reconstruction"),
        (np.clip(residual, 0.0, 1.0), "magma", "residual"),
    ]
    for ax, (img, cmap, label) in zip(axes, panels):
        ax.imshow(img, cmap=cmap, vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def render_sigma_trace(trace_csv: str | Path, path: str | Path) -> Path:
    """Plot the anomaly weight over training steps from a sigma_trace.csv."""
    trace_csv = Path(trace_csv)
    if not trace_csv.exists():
        raise IngestError(f"missing sigma trace: {trace_csv}")
    steps, sigmas = [], []
    for row in csv.DictReader(trace_csv.open()):
        steps.append(int(row["step"]))
        sigmas.append(float(row["sigma"]))
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(steps, sigmas, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("anomaly weight")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
