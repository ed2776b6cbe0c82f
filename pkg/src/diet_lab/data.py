"""Datasets and the indexed-dataset wrapper.

Every sample is paired with its storage index n, which is the training
target; true labels, when present, ride along for evaluation only. Supports
the IDX binary container for small image sets and CSV for flat features,
plus a seeded Gaussian-blob generator.
"""

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .seeding import component_rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class IndexedDataset:
    """Samples with stable indices 0..N-1 and optional evaluation labels.

    ``samples`` is (N, C, H, W) for image data or (N, D) for flat features;
    immutable by convention after construction.
    """

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.samples.shape[0]:
                raise ValueError(
                    f"{self.labels.shape[0]} labels for {self.samples.shape[0]} samples"
                )

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, n: int):
        return self.samples[n], n

    @property
    def feature_dim(self) -> int:
        """Flattened per-sample dimension."""
        return int(np.prod(self.samples.shape[1:]))

    def as_matrix(self) -> np.ndarray:
        """Samples flattened to an (N, D) float64 matrix."""
        return self.samples.reshape(len(self), -1)

    def num_classes(self) -> int:
        if self.labels is None:
            raise ValueError("dataset has no labels")
        return int(self.labels.max()) + 1


def with_indices(samples, labels=None) -> IndexedDataset:
    """Wrap samples so item n yields (sample_n, n); labels kept out-of-band."""
    return IndexedDataset(samples=np.asarray(samples), labels=labels)


def batch_iter(ds: IndexedDataset, batch_size: int, shuffle: bool, seed: int = 0,
               epoch: int = 0):
    """Yield (samples, original_indices) batches covering each sample once.

    Shuffle order is a pure function of (seed, epoch); the final partial
    batch is kept so every index receives gradient each epoch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(ds))
    if shuffle:
        order = component_rng(seed, f"shuffle:{epoch}").permutation(order)
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.samples[idx], idx


def gen_blobs(classes: int, per_class: int, dim: int, spread: float, seed: int,
              split: str = "train", centroid_scale: float = 1.0) -> IndexedDataset:
    """Seeded Gaussian blobs: pairwise-distant centroids plus isotropic noise.

    Centroids depend only on (seed, classes, dim): orthonormal directions
    scaled to ``centroid_scale`` when dim >= classes, unit-norm random
    directions otherwise. Noise depends additionally on ``split`` so that
    "train" and "test" are i.i.d. draws from the same mixture. spread=0
    degenerates to exact repeated centroids.
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("classes, per_class and dim must all be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    crng = component_rng(seed, "blob-centroids")
    g = crng.standard_normal((dim, classes))
    if dim >= classes:
        q, _ = np.linalg.qr(g)
        centroids = centroid_scale * q[:, :classes].T
    else:
        centroids = g.T / np.linalg.norm(g.T, axis=1, keepdims=True) * centroid_scale
    labels = np.repeat(np.arange(classes), per_class)
    samples = centroids[labels]
    if spread > 0:
        nrng = component_rng(seed, f"blob-noise:{split}")
        samples = samples + spread * nrng.standard_normal(samples.shape)
    return IndexedDataset(samples=samples, labels=labels)


# ---------------------------------------------------------------------------
# IDX container (big-endian, u8 payload)
# ---------------------------------------------------------------------------

def _read_idx(raw: bytes, path: str, magic: int, ndim: int) -> np.ndarray:
    if len(raw) < 4 + 4 * ndim:
        raise FormatError(f"{path}: truncated IDX header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    count = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) != count:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header promises {count}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None) -> IndexedDataset:
    """Load an IDX image file (and optional IDX label file) as a dataset.

    Images decode to float64 in [0, 1] (u8 / 255) with an explicit channel
    axis: (N, 1, H, W).
    """
    with open(images_path, "rb") as f:
        raw = f.read()
    images = _read_idx(raw, str(images_path), IDX_IMAGE_MAGIC, ndim=3)
    samples = images.astype(np.float64)[:, None, :, :] / 255.0
    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            raw = f.read()
        labels = _read_idx(raw, str(labels_path), IDX_LABEL_MAGIC, ndim=1)
        if labels.shape[0] != samples.shape[0]:
            raise FormatError(
                f"{labels_path}: {labels.shape[0]} labels for {samples.shape[0]} images"
            )
        labels = labels.astype(np.int64)
    return IndexedDataset(samples=samples, labels=labels)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write (N, H, W) or (N, 1, H, W) values in [0, 1] as an IDX u8 file."""
    images = np.asarray(images)
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise ValueError("IDX images are single-channel")
        images = images[:, 0]
    if images.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got shape {images.shape}")
    u8 = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">I", IDX_IMAGE_MAGIC))
        f.write(struct.pack(">3I", *u8.shape))
        f.write(u8.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("IDX labels must fit in u8")
    with open(path, "wb") as f:
        f.write(struct.pack(">I", IDX_LABEL_MAGIC))
        f.write(struct.pack(">I", labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CSV flat-feature container
# ---------------------------------------------------------------------------

def save_csv(path, ds: IndexedDataset) -> None:
    """Write flat features as CSV with a header; label column first if present."""
    x = ds.as_matrix()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        feat_names = [f"x{i}" for i in range(x.shape[1])]
        if ds.labels is not None:
            writer.writerow(["label"] + feat_names)
            for lab, row in zip(ds.labels, x):
                writer.writerow([int(lab)] + [repr(float(val)) for val in row])
        else:
            writer.writerow(feat_names)
            for row in x:
                writer.writerow([repr(float(val)) for val in row])


def load_csv(path) -> IndexedDataset:
    """Read a CSV of flat features.

    A non-numeric first row is treated as a header; a first column named
    "label" (or, headerless, an integer-valued first column) is taken as
    labels and the remaining columns as features.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError(f"{path}: empty CSV")

    def _numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = None
    if not all(_numeric(c) for c in rows[0]):
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: CSV has a header but no data rows")

    has_label = header is not None and header[0].strip().lower() == "label"
    try:
        values = np.array([[float(c) for c in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric data cell ({exc})") from exc
    if has_label:
        return IndexedDataset(samples=values[:, 1:], labels=values[:, 0].astype(np.int64))
    return IndexedDataset(samples=values)
