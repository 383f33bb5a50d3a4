"""SVG line charts for loss curves, scaling runs, and ablation tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "hiss"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_loss_curves(history: list[dict], path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["train_mse"] for h in history], label="train")
    ax.plot(epochs, [h["val_mse"] for h in history], label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_title(title or "loss curves")
    ax.legend()
    return _save(fig, path)


def plot_scaling(reports: list, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in reports:
        ax.loglog(r.lengths, r.medians, marker="o", label=f"{r.model} (slope {r.slope:.2f})")
    ax.set_xlabel("sequence length")
    ax.set_ylabel("forward time [s]")
    ax.set_title("wall clock vs length")
    ax.legend()
    return _save(fig, path)


def plot_ablation(summary: dict, path, title: str = "") -> Path:
    col = summary["column"]
    rows = sorted(summary["rows"], key=lambda r: r[col])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar([r[col] for r in rows], [r["mean"] for r in rows], yerr=[r["std"] for r in rows],
                marker="o", capsize=3)
    ax.set_xlabel(col)
    ax.set_ylabel("validation MSE")
    ax.set_title(title or f"ablation over {col}")
    return _save(fig, path)
