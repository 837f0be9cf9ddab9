"""Matplotlib rendering for run reports; each figure lands next to its data file.

matplotlib is imported lazily so library users who never render pay nothing.
"""

from __future__ import annotations

import os
import tempfile


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=110, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        _pyplot().close(fig)


def save_training_curve(rows, path: str, ylabel: str = "average reward per episode") -> None:
    """Line plot of the per-epoch training curve; rows are (epoch, value)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    if rows:
        epochs, values = zip(*rows)
        ax.plot(epochs, values, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    _save(fig, path)


def save_benchmark_chart(rows, path: str) -> None:
    """Grouped bars of auc/mcc/sensitivity/specificity, one group per run row."""
    plt = _pyplot()
    metrics = ("auc", "mcc", "sensitivity", "specificity")
    names = [f"{r['agent']} {r['range']}" for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(rows) + 2), 4))
    width = 0.8 / len(metrics)
    for k, metric in enumerate(metrics):
        xs = [i + (k - (len(metrics) - 1) / 2) * width for i in range(len(rows))]
        ax.bar(xs, [r[metric] for r in rows], width=width, label=metric)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(-1.0 if any(r["mcc"] < 0 for r in rows) else 0.0, 1.05)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(ncols=len(metrics), fontsize=8)
    _save(fig, path)


def save_roc_curve(fpr, tpr, auc_value: float, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(fpr, tpr, lw=1.4, label=f"AUC = {auc_value:.3f}")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    _save(fig, path)
