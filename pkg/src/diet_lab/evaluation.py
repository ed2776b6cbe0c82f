"""Linear-probe evaluation of frozen features.

The index head is discarded: only backbone outputs enter evaluation. The
probe is a multinomial linear classifier fit by full-batch gradient descent
with a fixed recipe, so results are deterministic. Also provides the
rank-correlation used to certify that training loss tracks probe accuracy.
"""

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .data import IndexedDataset


@dataclass(frozen=True)
class FeatureBank:
    """Frozen features aligned with evaluation labels."""

    features: np.ndarray  # (M, K)
    labels: np.ndarray  # (M,)
    split: str = "train"

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels are misaligned")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 0.1
    weight_decay: float = 1e-4
    max_steps: int = 2000
    grad_tol: float = 1e-6
    standardize: bool = True


@dataclass(frozen=True)
class ProbeResult:
    train_acc: float
    test_acc: float
    steps: int
    grad_norm: float


def extract_features(mdl: model_mod.DietModel, ds: IndexedDataset,
                     split: str = "train") -> FeatureBank:
    """Backbone outputs on clean (un-augmented) samples; the head is unused."""
    if ds.labels is None:
        raise ValueError("evaluation dataset must carry labels")
    feats = model_mod.forward(mdl.backbone, ds.as_matrix())
    return FeatureBank(features=feats, labels=ds.labels.copy(), split=split)


def top1(logits, labels) -> float:
    """Fraction of rows whose argmax matches the label.

    Ties resolve to the smallest class index (numpy argmax convention), so
    the result is deterministic.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("logits and labels are misaligned")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def linear_probe(train: FeatureBank, test: FeatureBank,
                 cfg: ProbeConfig = ProbeConfig()) -> ProbeResult:
    """Fit a multinomial linear classifier on frozen train features.

    Full-batch gradient descent on softmax cross-entropy with small weight
    decay, run until the gradient norm falls under ``cfg.grad_tol`` or
    ``cfg.max_steps`` is hit. Reports top-1 accuracy on both splits.
    """
    if train.features.shape[1] != test.features.shape[1]:
        raise ValueError("train and test feature widths differ")
    classes = int(max(train.labels.max(), test.labels.max())) + 1
    if np.unique(train.labels).size < 2:
        raise ValueError("probe training set holds a single class")

    xtr = train.features
    xte = test.features
    if cfg.standardize:
        mu = xtr.mean(axis=0)
        sd = np.maximum(xtr.std(axis=0), 1e-8)
        xtr = (xtr - mu) / sd
        xte = (xte - mu) / sd

    m, k = xtr.shape
    w = np.zeros((k, classes))
    b = np.zeros(classes)
    onehot = np.zeros((m, classes))
    onehot[np.arange(m), train.labels] = 1.0

    steps = 0
    grad_norm = np.inf
    for steps in range(1, cfg.max_steps + 1):
        logits = xtr @ w + b
        shifted = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        residual = (p - onehot) / m
        gw = xtr.T @ residual + cfg.weight_decay * w
        gb = residual.sum(axis=0)
        grad_norm = float(np.sqrt((gw * gw).sum() + (gb * gb).sum()))
        if grad_norm < cfg.grad_tol:
            break
        w -= cfg.lr * gw
        b -= cfg.lr * gb

    return ProbeResult(
        train_acc=top1(xtr @ w + b, train.labels),
        test_acc=top1(xte @ w + b, test.labels),
        steps=steps,
        grad_norm=grad_norm,
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks (1-based) with tied values assigned their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation with average-rank ties; 0 when either side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two equal-length 1-D series")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def loss_acc_correlation(records) -> float:
    """Spearman correlation between training loss and probe accuracy.

    Considers only records carrying a probe accuracy; needs at least three.
    """
    pts = [(r.loss, r.probe_acc) for r in records if r.probe_acc is not None]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 probed records, got {len(pts)}")
    losses, accs = zip(*pts)
    return spearman(np.array(losses), np.array(accs))
