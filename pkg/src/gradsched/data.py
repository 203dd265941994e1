"""Datasets, IDX loading and shard construction.

The non-IID partitioner sorts by label and hands each learner a contiguous
chunk, so a learner sees only a few classes. The partial variant shuffles
first, deals an IID share round-robin, then tops every shard up from the
label-sorted remainder; the ``noniid_fraction`` knob interpolates between
the two regimes.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .models import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(Exception):
    """Malformed IDX input."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, input_dim) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int

    def __post_init__(self):
        X, y = self.features, self.labels
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(
                f"inconsistent dataset shapes: features {X.shape}, labels {y.shape}"
            )
        if X.shape[0] == 0:
            raise ValueError("dataset must contain at least one example")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError(
                f"labels out of range for num_classes={self.num_classes}"
            )

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class Shard:
    """One learner's slice of a dataset, by index."""

    owner: int  # learner id, 1-based
    indices: np.ndarray  # (n_k,) int64, indices into the parent dataset

    @property
    def size(self) -> int:
        return self.indices.shape[0]


def _class_means(num_classes: int, input_dim: int, separation: float, rng):
    # Orthonormal directions keep every pair of means equidistant; with more
    # classes than dimensions an orthonormal frame cannot exist, so fall back
    # to normalized Gaussian directions.
    G = rng.standard_normal((input_dim, max(num_classes, 1)))
    if num_classes <= input_dim:
        Q, _ = np.linalg.qr(G[:, :num_classes])
        dirs = Q.T
    else:
        dirs = (G / np.linalg.norm(G, axis=0)).T
    return separation * dirs  # (num_classes, input_dim)


def _synthetic(num_classes, per_class, test_per_class, input_dim, separation, seed):
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, input_dim, separation, rng)

    def draw(count):
        X = np.empty((num_classes * count, input_dim), dtype=np.float64)
        y = np.empty(num_classes * count, dtype=np.int64)
        for c in range(num_classes):
            lo = c * count
            X[lo : lo + count] = means[c] + rng.standard_normal((count, input_dim))
            y[lo : lo + count] = c
        return Dataset(X, y, num_classes)

    train = draw(per_class)
    test = draw(test_per_class) if test_per_class > 0 else None
    return train, test


def generate_synthetic(num_classes, per_class, input_dim, separation, seed) -> Dataset:
    """Gaussian blobs, one unit-covariance cluster per class.

    Class means sit at distance ``separation`` from the origin along a
    seeded orthonormal frame. Examples are emitted in class blocks
    (labels 0,0,...,1,1,...). Fully determined by ``seed``.
    """
    train, _ = _synthetic(num_classes, per_class, 0, input_dim, separation, seed)
    return train


def generate_synthetic_split(
    num_classes, per_class, test_per_class, input_dim, separation, seed
):
    """Train/test pair drawn from the same class means.

    The train set is byte-identical to ``generate_synthetic`` with the same
    arguments; test examples are drawn afterwards from the same stream.
    """
    if test_per_class < 1:
        raise ValueError("test_per_class must be >= 1")
    return _synthetic(
        num_classes, per_class, test_per_class, input_dim, separation, seed
    )


def _read_file(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def load_idx(images_path, labels_path) -> Dataset:
    """Load an image/label pair of IDX (ubyte) files.

    Pixels are scaled to [0, 1] and flattened row-major, so input_dim is
    rows*cols. Header integers are big-endian per the format.
    """
    img = _read_file(images_path)
    if len(img) < 16:
        raise IdxTruncatedError(f"{images_path}: header needs 16 bytes, got {len(img)}")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    expected = count * rows * cols
    if len(img) - 16 != expected:
        raise IdxTruncatedError(
            f"{images_path}: payload holds {len(img) - 16} bytes, expected {expected}"
        )

    lab = _read_file(labels_path)
    if len(lab) < 8:
        raise IdxTruncatedError(f"{labels_path}: header needs 8 bytes, got {len(lab)}")
    lmagic, lcount = struct.unpack(">II", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise IdxMagicError(
            f"{labels_path}: bad magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    if len(lab) - 8 != lcount:
        raise IdxTruncatedError(
            f"{labels_path}: payload holds {len(lab) - 8} bytes, expected {lcount}"
        )
    if lcount != count:
        raise IdxCountMismatchError(
            f"images hold {count} items but labels hold {lcount}"
        )

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16)
    X = pixels.astype(np.float64).reshape(count, rows * cols) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(X, y, int(y.max()) + 1 if count else 0)


def _shard_targets(n: int, K: int) -> np.ndarray:
    # First n % K shards take the extra example; sizes differ by at most 1.
    base = n // K
    sizes = np.full(K, base, dtype=np.int64)
    sizes[: n % K] += 1
    return sizes


def partition_noniid(dataset: Dataset, K: int, seed: int) -> list[Shard]:
    """Label-sorted contiguous chunks, one per learner.

    Sorting is stable (ties keep original order), so the result is fully
    deterministic; ``seed`` is accepted for interface symmetry but unused
    by the fully sorted scheme.
    """
    n = len(dataset)
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= {n}, got K={K}")
    order = np.argsort(dataset.labels, kind="stable")
    sizes = _shard_targets(n, K)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [
        Shard(k + 1, np.ascontiguousarray(order[bounds[k] : bounds[k + 1]]))
        for k in range(K)
    ]


def partition_partial(dataset: Dataset, K: int, x: float, seed: int) -> list[Shard]:
    """Mix an IID share with a label-sorted share.

    A seeded shuffle splits off round((1-x)*n) examples that are dealt
    round-robin; the remaining x share is sorted by label and handed out in
    contiguous chunks that top every shard up to its target size. x=1
    reproduces the fully sorted scheme's shard sizes, x=0 is plain IID.
    """
    n = len(dataset)
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= {n}, got K={K}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"noniid fraction must be in [0, 1], got {x}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    iid_count = int(round((1.0 - x) * n))
    iid, skew = perm[:iid_count], perm[iid_count:]

    targets = _shard_targets(n, K)
    parts = [iid[k::K] for k in range(K)]
    # Stable label sort of the leftover, then chunks sized to hit each target.
    skew = skew[np.argsort(dataset.labels[skew], kind="stable")]
    pos = 0
    shards = []
    for k in range(K):
        need = int(targets[k]) - parts[k].shape[0]
        assert need >= 0, "round-robin share exceeded shard target"
        chunk = skew[pos : pos + need]
        pos += need
        shards.append(
            Shard(k + 1, np.ascontiguousarray(np.concatenate([parts[k], chunk])))
        )
    assert pos == skew.shape[0]
    return shards


def sample_batch(
    shard: Shard, dataset: Dataset, batch_size: int, rng: np.random.Generator
) -> Batch:
    """Uniform sample without replacement from one shard."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > shard.size:
        raise ValueError(
            f"batch_size {batch_size} exceeds shard {shard.owner} size {shard.size}"
        )
    idx = rng.choice(shard.indices, size=batch_size, replace=False)
    return Batch(dataset.features[idx], dataset.labels[idx])
