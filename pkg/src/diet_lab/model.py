"""Feature-extracting backbones and the bias-free index-classification head.

Backbones are either a single linear map or a rectifier MLP; gradients are
hand-derived layer-wise backward passes (the model family is small and
fixed). The head is an N x K matrix with no bias whose rows score features
against every dataset index; it is discarded at evaluation time.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError, StateError
from .seeding import component_rng


@dataclass
class Backbone:
    """kind "linear" (single affine map) or "mlp" (rectifier between layers).

    ``weights[i]`` is (fan_in, fan_out); forward is x @ W + b per layer with
    ReLU between hidden layers, none after the last.
    """

    kind: str
    widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    _cache: dict | None = field(default=None, repr=False)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class DietHead:
    """Bias-free (N, K) classifier mapping features to per-index logits."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2:
            raise ShapeError("head weight must be 2-D")


@dataclass
class DietModel:
    """A trained backbone plus its index head."""

    backbone: Backbone
    head: DietHead


def init_backbone(kind: str, widths, seed: int = 0) -> Backbone:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if kind not in ("linear", "mlp"):
        raise ValueError(f"unknown backbone kind {kind!r}")
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if any(w < 1 for w in widths):
        raise ValueError(f"zero or negative width in {widths}")
    if kind == "linear" and len(widths) != 2:
        raise ValueError("linear backbone takes exactly (input, output) widths")
    rng = component_rng(seed, "backbone-init")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Backbone(kind=kind, widths=widths, weights=weights, biases=biases)


def init_head(n: int, k: int, seed: int = 0) -> DietHead:
    """Head rows drawn like backbone weights (uniform, fan_in = K); no bias."""
    if n < 1 or k < 1:
        raise ValueError("head dimensions must be >= 1")
    bound = 1.0 / np.sqrt(k)
    rng = component_rng(seed, "head-init")
    return DietHead(w=rng.uniform(-bound, bound, size=(n, k)))


def forward(backbone: Backbone, batch) -> np.ndarray:
    """Run the backbone on a (B, D) batch, caching activations for backward."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != backbone.in_dim:
        raise ShapeError(f"batch must be (B, {backbone.in_dim}), got {x.shape}")
    inputs = [x]  # input seen by each layer
    pres = []  # hidden pre-activations, for the rectifier mask
    out = x
    last = len(backbone.weights) - 1
    for i, (w, b) in enumerate(zip(backbone.weights, backbone.biases)):
        pre = out @ w + b
        if i < last:
            pres.append(pre)
            out = np.maximum(pre, 0.0)  # subgradient at 0 taken as 0
            inputs.append(out)
        else:
            out = pre
    backbone._cache = {"inputs": inputs, "pres": pres, "feats": out}
    return out


def head_logits(head: DietHead, feats) -> np.ndarray:
    """Logits = feats @ w.T; no bias term exists."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != head.w.shape[1]:
        raise ShapeError(f"features must be (B, {head.w.shape[1]}), got {feats.shape}")
    return feats @ head.w.T


def backward(backbone: Backbone, head: DietHead, dlogits
             ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Chain-rule gradients from d(loss)/d(logits).

    Returns (weight_grads, bias_grads, head_grad) aligned with the backbone
    layers. Requires the matching forward pass to be cached.
    """
    if backbone._cache is None:
        raise StateError("backward called before forward")
    cache = backbone._cache
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (cache["feats"].shape[0], head.w.shape[0]):
        raise ShapeError(
            f"upstream gradient must be {(cache['feats'].shape[0], head.w.shape[0])},"
            f" got {dlogits.shape}"
        )

    head_grad = dlogits.T @ cache["feats"]
    d = dlogits @ head.w

    n_layers = len(backbone.weights)
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        weight_grads[i] = cache["inputs"][i].T @ d
        bias_grads[i] = d.sum(axis=0)
        if i > 0:
            d = (d @ backbone.weights[i].T) * (cache["pres"][i - 1] > 0)
    return weight_grads, bias_grads, head_grad


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest + raw little-endian float64 parameter blob
# ---------------------------------------------------------------------------

def save_checkpoint(path_prefix, model: DietModel, seed: int = 0) -> None:
    """Write ``<prefix>.json`` and ``<prefix>.bin``; round-trip is bit-exact."""
    prefix = Path(path_prefix)
    manifest = {
        "kind": model.backbone.kind,
        "widths": model.backbone.widths,
        "seed": seed,
        "n": int(model.head.w.shape[0]),
        "k": int(model.head.w.shape[1]),
    }
    blob = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes()
        for p in model.backbone.params() + [model.head.w]
    )
    prefix.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True))
    prefix.with_suffix(".bin").write_bytes(blob)


def load_checkpoint(path_prefix) -> tuple[DietModel, dict]:
    """Rebuild a model from a manifest/blob pair; returns (model, manifest)."""
    prefix = Path(path_prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    raw = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    backbone = init_backbone(manifest["kind"], manifest["widths"], manifest["seed"])
    offset = 0
    for i, (fan_in, fan_out) in enumerate(zip(manifest["widths"][:-1],
                                              manifest["widths"][1:])):
        backbone.weights[i] = raw[offset:offset + fan_in * fan_out].reshape(
            fan_in, fan_out).astype(np.float64)
        offset += fan_in * fan_out
        backbone.biases[i] = raw[offset:offset + fan_out].astype(np.float64)
        offset += fan_out
    n, k = manifest["n"], manifest["k"]
    head = DietHead(w=raw[offset:offset + n * k].reshape(n, k).astype(np.float64))
    offset += n * k
    if offset != raw.size:
        raise ShapeError(f"checkpoint blob holds {raw.size} values, expected {offset}")
    return DietModel(backbone=backbone, head=head), manifest
