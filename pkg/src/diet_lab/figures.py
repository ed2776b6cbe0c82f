"""Figure rendering for run reports.

Every report path that writes delimited data (metrics JSONL, loss-curve CSV)
can also render the matching figure to a PNG next to it. Rendering is
headless (Agg) and never required for the numeric outputs to be valid.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(metrics, path) -> None:
    """Loss and online probe accuracy against epoch, twin axes."""
    epochs = [r.epoch for r in metrics]
    losses = [r.loss for r in metrics]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, color="tab:blue", label="training loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    probed = [(r.epoch, r.probe_acc) for r in metrics if r.probe_acc is not None]
    if probed:
        ax2 = ax.twinx()
        pe, pa = zip(*probed)
        ax2.plot(pe, pa, color="tab:red", marker=".", label="probe accuracy")
        ax2.set_ylabel("probe test accuracy", color="tab:red")
        ax2.tick_params(axis="y", labelcolor="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_accuracy_scatter(metrics, path) -> None:
    """Training loss vs probe accuracy, one point per probed epoch."""
    pts = [(r.loss, r.probe_acc) for r in metrics if r.probe_acc is not None]
    fig, ax = plt.subplots(figsize=(5, 4))
    if pts:
        losses, accs = zip(*pts)
        ax.scatter(losses, accs, c=range(len(pts)), cmap="viridis", s=18)
    ax.set_xlabel("training loss")
    ax.set_ylabel("probe test accuracy")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_convergence_curve(losses, optimal_loss: float, path) -> None:
    """Linear-model training loss per step against the optimal value."""
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = np.arange(len(losses))
    gap = np.maximum(np.asarray(losses) - optimal_loss, 1e-16)
    ax.semilogy(steps, gap, color="tab:blue")
    ax.set_xlabel("step")
    ax.set_ylabel("loss - optimal (log scale)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_matrix_heatmap(a: np.ndarray, path, title: str = "") -> None:
    """Entrywise heatmap (used for the softmax-residual block structure)."""
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(a, cmap="RdBu_r")
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
