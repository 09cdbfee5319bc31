"""Static figures for training logs and metric reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricReport  # noqa: E402
from .train import EpochRow, TrainConfig, lr_at  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_training_log(rows: list[EpochRow], out, schedule: TrainConfig | None = None) -> Path:
    """Three panels: learning rate, training loss, validation macro metrics.

    When ``schedule`` is given the continuous schedule is drawn under the
    logged per-epoch values.
    """
    if not rows:
        raise ValueError("training log is empty")
    epochs = np.array([r.epoch for r in rows])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10, 3))
        ax = axes[0]
        if schedule is not None:
            e = np.linspace(0, schedule.total_epochs, 400)
            ax.plot(e, [lr_at(v, schedule) for v in e], color="0.7", lw=1, label="schedule")
        ax.plot(epochs, [r.lr for r in rows], "o-", ms=3, label="logged")
        ax.set(xlabel="epoch", ylabel="learning rate", title="Warm-up + cosine annealing")
        ax.ticklabel_format(axis="y", style="sci", scilimits=(0, 0))
        ax.legend(frameon=False)

        axes[1].plot(epochs, [r.train_loss for r in rows], "o-", ms=3, color="C1")
        axes[1].set(xlabel="epoch", ylabel="BCE", title="Training loss")

        axes[2].plot(epochs, [r.val_auprc for r in rows], "o-", ms=3, label="AUPRC")
        axes[2].plot(epochs, [r.val_auroc for r in rows], "s-", ms=3, label="AUROC")
        axes[2].set(xlabel="epoch", ylim=(0, 1.02), title="Validation (macro)")
        axes[2].legend(frameon=False)
        fig.tight_layout()
        out = Path(out)
        fig.savefig(out)
        plt.close(fig)
    return out


def plot_report(report: MetricReport, out, class_names: list[str] | None = None) -> Path:
    """Per-class AUPRC/AUROC bars with the macro means as dashed lines."""
    idx = [c.class_index for c in report.per_class]
    names = [class_names[i] if class_names else str(i) for i in idx]
    x = np.arange(len(idx))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(idx) + 2), 3))
        ax.bar(x - 0.2, [c.auprc for c in report.per_class], 0.4, label="AUPRC")
        ax.bar(x + 0.2, [c.auroc for c in report.per_class], 0.4, label="AUROC")
        ax.axhline(report.macro_auprc, color="C0", ls="--", lw=1)
        ax.axhline(report.macro_auroc, color="C1", ls="--", lw=1)
        ax.set_xticks(x, names, rotation=60, ha="right")
        ax.set(ylim=(0, 1.02), ylabel="score")
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        out = Path(out)
        fig.savefig(out)
        plt.close(fig)
    return out
