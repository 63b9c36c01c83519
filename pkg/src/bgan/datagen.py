"""Dataset construction: the low-rank Gaussian synthetic process, its
class-conditional variant for semi-supervised benchmarks, labeled/unlabeled
splitting, and IDX image ingestion with block-mean downsampling.

The synthetic process draws a D x d map A once, then x = A z + eps with
z ~ N(0, 10 I_d) and eps ~ N(0, 0.01 I_D), so the population covariance is
10 A A^T + 0.01 I.  The class-conditional variant uses one independent A_k
per class and tags each point with its generating map.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, FormatError, ShapeError
from .rng import substream

Z_VARIANCE = 10.0
NOISE_STD = 0.1

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of one synthetic draw: ambient dim D, latent dim d, count n."""

    D: int
    d: int
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.d >= self.D:
            raise ConfigurationError(f"latent dim d={self.d} must be < ambient D={self.D}")
        if self.n < 1 or self.d < 1:
            raise ConfigurationError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")


@dataclass
class Dataset:
    """Feature matrix with optional labels (1..K) and image geometry."""

    X: np.ndarray
    y: np.ndarray | None = None
    image_shape: tuple | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.X.shape}")
        if self.y is not None:
            self.y = np.ascontiguousarray(self.y, dtype=np.int64)
            if self.y.shape != (self.X.shape[0],):
                raise ShapeError("labels must align with feature rows")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class LabeledSplit:
    """Class-balanced labeled subset, unlabeled remainder, held-out test set."""

    X_s: np.ndarray
    y_s: np.ndarray
    X_unlabeled: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def gen_synthetic(spec: SyntheticSpec, A: np.ndarray | None = None,
                  noise_std: float = NOISE_STD):
    """Draw one dataset; returns (Dataset, A, Z).

    ``A`` and ``noise_std`` are overridable for oracle tests; by default A is
    drawn entrywise standard normal, once per dataset.
    """
    rng = substream(spec.seed, "synthetic")
    if A is None:
        A = rng.normal(size=(spec.D, spec.d))
    else:
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (spec.D, spec.d):
            raise ShapeError(f"A must be {spec.D} x {spec.d}, got {A.shape}")
    Z = rng.normal(scale=np.sqrt(Z_VARIANCE), size=(spec.n, spec.d))
    X = Z @ A.T + rng.normal(scale=noise_std, size=(spec.n, spec.D))
    return Dataset(X), A, Z


def gen_synthetic_classes(spec: SyntheticSpec, K: int):
    """Class-conditional variant: one generating map per class, labels 1..K.

    Rows are shuffled; class sizes differ by at most one.  Returns
    (Dataset with labels, list of per-class maps).
    """
    if K < 2:
        raise ConfigurationError(f"need K >= 2 classes, got {K}")
    if spec.n < K:
        raise ConfigurationError(f"need at least one point per class, got n={spec.n}, K={K}")
    rng = substream(spec.seed, "synthetic-classes")
    counts = [spec.n // K + (1 if k < spec.n % K else 0) for k in range(K)]
    maps, blocks, labels = [], [], []
    for k, count in enumerate(counts):
        A = rng.normal(size=(spec.D, spec.d))
        Z = rng.normal(scale=np.sqrt(Z_VARIANCE), size=(count, spec.d))
        blocks.append(Z @ A.T + rng.normal(scale=NOISE_STD, size=(count, spec.D)))
        labels.append(np.full(count, k + 1, dtype=np.int64))
        maps.append(A)
    X = np.concatenate(blocks)
    y = np.concatenate(labels)
    order = rng.permutation(spec.n)
    return Dataset(X[order], y[order]), maps


def make_split(dataset: Dataset, n_labeled: int, seed: int,
               test_fraction: float = 0.0) -> LabeledSplit:
    """Carve a class-balanced labeled subset of size ``n_labeled``.

    A stratified test set of ``test_fraction`` is held out first (empty when
    0); the labeled subset is drawn class-balanced (within +-1) from the
    rest, and everything remaining becomes the unlabeled pool.  Every train
    row lands in exactly one of labeled/unlabeled.
    """
    if dataset.y is None:
        raise DataError("make_split needs a labeled dataset")
    classes = np.unique(dataset.y)
    K = classes.size
    if n_labeled < K:
        raise ConfigurationError(
            f"cannot class-balance {n_labeled} labeled rows over {K} classes")
    rng = substream(seed, "split")

    test_idx, train_idx = [], []
    for c in classes:
        rows = np.flatnonzero(dataset.y == c)
        rows = rows[rng.permutation(rows.size)]
        n_test = int(round(test_fraction * rows.size))
        test_idx.append(rows[:n_test])
        train_idx.append(rows[n_test:])

    base, extra = divmod(n_labeled, K)
    labeled_idx, unlabeled_idx = [], []
    for pos, rows in enumerate(train_idx):
        want = base + (1 if pos < extra else 0)
        if want > rows.size:
            raise ConfigurationError(
                f"class {classes[pos]} has only {rows.size} train rows, need {want}")
        labeled_idx.append(rows[:want])
        unlabeled_idx.append(rows[want:])

    labeled = np.concatenate(labeled_idx)
    unlabeled = np.concatenate(unlabeled_idx) if unlabeled_idx else np.empty(0, dtype=np.int64)
    test = np.concatenate(test_idx) if test_idx else np.empty(0, dtype=np.int64)
    return LabeledSplit(
        X_s=dataset.X[labeled].copy(),
        y_s=dataset.y[labeled].copy(),
        X_unlabeled=dataset.X[unlabeled].copy(),
        X_test=dataset.X[test].copy(),
        y_test=dataset.y[test].copy(),
    )


def _read_exact(fh, n: int, path, offset: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated, needed {n} bytes at offset {offset}")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Parse a big-endian IDX image/label file pair.

    Pixels are rescaled to [-1, 1] via x / 127.5 - 1; labels move from 0..9
    to 1..10 since class 0 is reserved for generated samples.
    """
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, 0))
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{images_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IDX_IMAGE_MAGIC:08x}")
        payload = _read_exact(fh, count * rows * cols, images_path, 16)
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path, 0))
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"{labels_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = _read_exact(fh, n_labels, labels_path, 8)
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if count != n_labels:
        raise FormatError(
            f"{images_path} holds {count} images but {labels_path} holds {n_labels} labels")
    X = pixels.astype(np.float64) / 127.5 - 1.0
    return Dataset(X, labels + 1, image_shape=(rows, cols))


def write_idx(dataset: Dataset, images_path, labels_path):
    """Inverse of load_idx (exact for byte-valued pixels); used for fixtures."""
    if dataset.y is None or dataset.image_shape is None:
        raise DataError("write_idx needs labels and an image shape")
    rows, cols = dataset.image_shape
    pixels = np.rint((dataset.X + 1.0) * 127.5)
    if pixels.min() < 0 or pixels.max() > 255:
        raise DataError("pixel values outside [0, 255] after rescaling")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, dataset.n, rows, cols))
        fh.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, dataset.n))
        fh.write((dataset.y - 1).astype(np.uint8).tobytes())


def downsample(dataset: Dataset, factor: int) -> Dataset:
    """Block-mean pooling of square image features by ``factor`` per side."""
    if dataset.image_shape is None:
        raise DataError("downsample needs image-shaped data")
    rows, cols = dataset.image_shape
    if rows % factor or cols % factor:
        raise ConfigurationError(
            f"image shape {rows}x{cols} not divisible by factor {factor}")
    r, c = rows // factor, cols // factor
    imgs = dataset.X.reshape(dataset.n, r, factor, c, factor)
    pooled = imgs.mean(axis=(2, 4)).reshape(dataset.n, r * c)
    return Dataset(pooled, None if dataset.y is None else dataset.y.copy(), image_shape=(r, c))


def save_csv(dataset: Dataset, path):
    """Header row plus one datapoint per line, full-precision decimal text."""
    cols = [f"x{i}" for i in range(dataset.X.shape[1])]
    if dataset.y is not None:
        cols.append("label")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            if dataset.y is not None:
                row.append(str(int(dataset.y[i])))
            fh.write(",".join(row) + "\n")
