"""Figures written next to the JSON artifacts of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_training_curves", "plot_recall", "plot_ablation"]


def _style(ax) -> None:
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(True, color="gainsboro", linewidth=0.6)


def _save(fig, path) -> Path:
    path = Path(path)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_training_curves(stats: list[dict], path) -> Path:
    epochs = [row["epoch"] for row in stats]
    fig, (ax_loss, ax_rec) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_loss.plot(epochs, [row["train_loss"] for row in stats], marker="o", color="black")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("BPR loss per pair")
    for k, color in ((5, "tab:blue"), (10, "tab:orange"), (20, "tab:green")):
        key = f"val_recall@{k}"
        if stats and key in stats[0]:
            ax_rec.plot(epochs, [row[key] for row in stats], marker="o", color=color, label=f"@{k}")
    ax_rec.set_xlabel("epoch")
    ax_rec.set_ylabel("validation recall")
    if ax_rec.lines:
        ax_rec.legend(frameon=False)
    for ax in (ax_loss, ax_rec):
        _style(ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_recall(reports: dict[str, dict], path) -> Path:
    """Grouped bars of recall@k; ``reports`` maps a label to a report dict."""
    ks = (5, 10, 20)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    width = 0.8 / max(1, len(reports))
    for j, (label, rep) in enumerate(reports.items()):
        xs = [i + j * width for i in range(len(ks))]
        ax.bar(xs, [rep[f"recall@{k}"] for k in ks], width=width, label=label)
    ax.set_xticks([i + width * (len(reports) - 1) / 2 for i in range(len(ks))])
    ax.set_xticklabels([f"Recall@{k}" for k in ks])
    ax.legend(frameon=False)
    _style(ax)
    return _save(fig, path)


def plot_ablation(table: dict[str, dict[str, dict]], path, k: int = 10) -> Path:
    """Bars of recall@k per embedding variant, one series per memory updater."""
    updaters = list(table)
    variants = list(table[updaters[0]])
    fig, ax = plt.subplots(figsize=(5, 3.4))
    width = 0.8 / len(updaters)
    for j, upd in enumerate(updaters):
        xs = [i + j * width for i in range(len(variants))]
        ax.bar(xs, [table[upd][v][f"recall@{k}"] for v in variants], width=width, label=upd.upper())
    ax.set_xticks([i + width * (len(updaters) - 1) / 2 for i in range(len(variants))])
    ax.set_xticklabels(variants)
    ax.set_ylabel(f"Recall@{k}")
    ax.legend(frameon=False)
    _style(ax)
    return _save(fig, path)
