"""Training-curve figure written next to the metrics table."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsRecord  # noqa: E402


def plot_training_curves(history: Sequence[MetricsRecord], path, title: str = "") -> Path:
    """Loss and F1 per epoch for the train and val splits, saved as PNG."""
    path = Path(path)
    fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split, style in (("train", "-"), ("val", "--")):
        rows = [r for r in history if r.split == split]
        if not rows:
            continue
        epochs = [r.epoch for r in rows]
        ax_loss.plot(epochs, [r.loss for r in rows], style, label=split)
        ax_f1.plot(epochs, [r.f1 for r in rows], style, label=split)
        aucs = [r.auc for r in rows]
        if split == "val" and all(a is not None for a in aucs):
            ax_f1.plot(epochs, aucs, ":", label="val auc")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("score")
    ax_f1.set_ylim(0, 1)
    for ax in (ax_loss, ax_f1):
        ax.grid(alpha=0.3)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
