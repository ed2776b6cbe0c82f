"""Training loop: label-smoothed cross-entropy over sample indices, AdamW,
linear warmup followed by cosine annealing, and batch-size learning-rate
scaling. A supervised twin of the loop (true labels as targets) serves as
the comparison baseline.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import augment as augment_mod
from . import model as model_mod
from .data import IndexedDataset, batch_iter
from .errors import NumericError, TrainingDivergedError
from .seeding import component_rng

BASE_BATCH_SIZE = 256


@dataclass
class TrainConfig:
    lr: float = 0.001
    weight_decay: float = 0.05
    label_smoothing: float = 0.8
    warmup_epochs: int = 10
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    scale_lr_by_batch: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must lie in [0, 1)")
        if self.warmup_epochs > self.epochs:
            raise ValueError("warmup_epochs cannot exceed epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MetricsRecord:
    epoch: int
    loss: float
    lr: float
    probe_acc: float | None = None
    seconds: float = 0.0

    def to_jsonl_dict(self) -> dict:
        # Wall-clock excluded: metrics files must be byte-identical across
        # reruns of the same config (timings go to a sidecar).
        return {"epoch": self.epoch, "loss": self.loss, "lr": self.lr,
                "probe_acc": self.probe_acc}


def smoothed_xent(logits, targets, smoothing: float
                  ) -> tuple[float, np.ndarray]:
    """Label-smoothed cross-entropy, mean over the batch, plus its gradient.

    The target distribution mixes (1 - eps) of the one-hot label with eps
    spread uniformly over all classes (true one included). The gradient with
    respect to the logits is (softmax - target) / batch.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    b, n = logits.shape
    if targets.shape != (b,):
        raise ValueError(f"need {b} targets, got shape {targets.shape}")
    if targets.min() < 0 or targets.max() >= n:
        raise ValueError("target index out of range")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must lie in [0, 1)")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    t = np.full((b, n), smoothing / n)
    t[np.arange(b), targets] += 1.0 - smoothing
    loss = float(-(t * log_probs).sum() / b)
    grad = (np.exp(log_probs) - t) / b
    return loss, grad


@dataclass
class AdamWState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adamw(params: list) -> AdamWState:
    return AdamWState(m=[np.zeros_like(p) for p in params],
                      v=[np.zeros_like(p) for p in params])


def adamw_step(params: list, grads: list, state: AdamWState, lr: float,
               weight_decay: float) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; aborting the step")
    state.t += 1
    corr1 = 1.0 - state.beta1 ** state.t
    corr2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        p -= lr * (m_hat / (np.sqrt(v_hat) + state.eps) + weight_decay * p)


def lr_at(step: int, total_steps: int, warmup_steps: int, peak_lr: float) -> float:
    """Linear ramp 0 -> peak over warmup, then cosine annealing to 0 at T."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if warmup_steps > total_steps:
        raise ValueError("warmup_steps cannot exceed total_steps")
    if step < warmup_steps:
        return peak_lr * step / warmup_steps
    span = total_steps - warmup_steps
    if span == 0:
        return peak_lr
    progress = (step - warmup_steps) / span
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def scale_lr(base_lr: float, batch_size: int) -> float:
    """Standard linear scaling: base_lr * batch_size / 256."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return base_lr * batch_size / BASE_BATCH_SIZE


def _augment_batch(pipeline, batch, indices, seed: int, epoch: int) -> np.ndarray:
    out = []
    for sample, idx in zip(batch, indices):
        rng = component_rng(seed, f"augment:{epoch}:{int(idx)}")
        out.append(augment_mod.apply(pipeline, sample, rng))
    return np.stack(out)


def _run_loop(ds: IndexedDataset, backbone, cfg: TrainConfig, targets_of,
              head_rows: int, pipeline=None, probe_fn=None
              ) -> tuple[model_mod.DietModel, list[MetricsRecord]]:
    head = model_mod.init_head(head_rows, backbone.out_dim,
                               seed=cfg.seed)
    params = backbone.params() + [head.w]
    state = init_adamw(params)
    peak = scale_lr(cfg.lr, cfg.batch_size) if cfg.scale_lr_by_batch else cfg.lr
    steps_per_epoch = math.ceil(len(ds) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    cadence = max(1, cfg.epochs // 50)

    metrics: list[MetricsRecord] = []
    mdl = model_mod.DietModel(backbone=backbone, head=head)
    step = 0
    lr = 0.0
    for epoch in range(cfg.epochs):
        tic = time.perf_counter()
        epoch_losses = []
        for batch, indices in batch_iter(ds, cfg.batch_size, shuffle=True,
                                         seed=cfg.seed, epoch=epoch):
            if pipeline is not None:
                batch = _augment_batch(pipeline, batch, indices, cfg.seed, epoch)
            x = batch.reshape(batch.shape[0], -1)
            feats = model_mod.forward(backbone, x)
            logits = model_mod.head_logits(head, feats)
            loss, dlogits = smoothed_xent(logits, targets_of(indices),
                                          cfg.label_smoothing)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    model=mdl, metrics=metrics)
            w_grads, b_grads, head_grad = model_mod.backward(backbone, head, dlogits)
            grads = []
            for wg, bg in zip(w_grads, b_grads):
                grads.append(wg)
                grads.append(bg)
            grads.append(head_grad)
            lr = lr_at(step, total_steps, warmup_steps, peak)
            adamw_step(params, grads, state, lr, cfg.weight_decay)
            step += 1
            epoch_losses.append(loss)
        record = MetricsRecord(epoch=epoch, loss=float(np.mean(epoch_losses)),
                               lr=lr, seconds=time.perf_counter() - tic)
        if probe_fn is not None and (
                (epoch + 1) % cadence == 0 or epoch == cfg.epochs - 1):
            record.probe_acc = float(probe_fn(mdl))
        metrics.append(record)
    return mdl, metrics


def train_diet(ds: IndexedDataset, backbone, cfg: TrainConfig, pipeline=None,
               probe_fn=None) -> tuple[model_mod.DietModel, list[MetricsRecord]]:
    """Self-supervised training: each sample's dataset index is its target.

    The head has one row per sample. ``probe_fn``, when given, is called on
    the live model every max(1, epochs // 50) epochs (and on the final one)
    and its return value recorded as the online probe accuracy.
    """
    return _run_loop(ds, backbone, cfg, targets_of=lambda idx: idx,
                     head_rows=len(ds), pipeline=pipeline, probe_fn=probe_fn)


def train_supervised(ds: IndexedDataset, backbone, cfg: TrainConfig,
                     pipeline=None, probe_fn=None
                     ) -> tuple[model_mod.DietModel, list[MetricsRecord]]:
    """Baseline: identical loop with true class labels as targets."""
    if ds.labels is None:
        raise ValueError("supervised training requires labels")
    labels = ds.labels
    return _run_loop(ds, backbone, cfg, targets_of=lambda idx: labels[idx],
                     head_rows=ds.num_classes(), pipeline=pipeline,
                     probe_fn=probe_fn)


def train_accuracy(mdl: model_mod.DietModel, ds: IndexedDataset) -> float:
    """Fraction of samples whose own-head argmax matches their label."""
    if ds.labels is None:
        raise ValueError("dataset has no labels")
    feats = model_mod.forward(mdl.backbone, ds.as_matrix())
    logits = model_mod.head_logits(mdl.head, feats)
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))
