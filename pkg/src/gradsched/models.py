"""Small differentiable classifiers over a flat parameter vector.

Two kinds are supported:

``softmax_regression``
    logits = x @ W + b. Parameters are a (input_dim+1, num_classes) matrix
    stored row-major in a flat float64 vector; the final row holds the
    class biases.

``mlp1``
    One tanh hidden layer: logits = tanh(x @ W1 + b1) @ W2 + b2. The flat
    vector is the (input_dim+1, hidden_dim) input block followed by the
    (hidden_dim+1, num_classes) output block, each with its bias folded in
    as the last row, both row-major.

Loss is mean cross-entropy over the batch; gradients are analytic and
come from the kernel backends in :mod:`gradsched.kernels`.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels

_KINDS = ("softmax_regression", "mlp1")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind == "mlp1" and self.hidden_dim < 1:
            raise ValueError("mlp1 requires hidden_dim >= 1")
        if self.kind == "softmax_regression" and self.hidden_dim != 0:
            raise ValueError("softmax_regression takes no hidden layer")

    @property
    def param_count(self) -> int:
        if self.kind == "softmax_regression":
            return (self.input_dim + 1) * self.num_classes
        return (self.input_dim + 1) * self.hidden_dim + (
            self.hidden_dim + 1
        ) * self.num_classes


class Batch(NamedTuple):
    features: np.ndarray  # (B, input_dim) float64
    labels: np.ndarray  # (B,) int64


def make_batch(features, labels) -> Batch:
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(
            f"labels shape {y.shape} does not match {X.shape[0]} examples"
        )
    if X.shape[0] == 0:
        raise ValueError("batch must contain at least one example")
    return Batch(X, y)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform [-0.05, 0.05] init, fully determined by the generator state."""
    return rng.uniform(-0.05, 0.05, size=spec.param_count)


def _check_inputs(spec: ModelSpec, w: np.ndarray, X: np.ndarray, y=None) -> None:
    if w.shape != (spec.param_count,):
        raise ValueError(
            f"parameter vector has length {w.shape}, expected ({spec.param_count},)"
        )
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(
            f"features shape {X.shape} does not match input_dim {spec.input_dim}"
        )
    if X.shape[0] == 0:
        raise ValueError("need at least one example")
    if y is not None:
        if y.shape != (X.shape[0],):
            raise ValueError("labels do not match features")
        if y.min() < 0 or y.max() >= spec.num_classes:
            raise ValueError(
                f"labels must lie in [0, {spec.num_classes}), got range "
                f"[{y.min()}, {y.max()}]"
            )


def loss_and_gradient(spec: ModelSpec, w: np.ndarray, batch: Batch):
    X, y = batch
    _check_inputs(spec, w, X, y)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if spec.kind == "softmax_regression":
        return kernels.softmax_loss_grad(w, X, y, spec.num_classes)
    return kernels.mlp_loss_grad(w, X, y, spec.hidden_dim, spec.num_classes)


def loss(spec: ModelSpec, w: np.ndarray, batch: Batch) -> float:
    return loss_and_gradient(spec, w, batch)[0]


def gradient(spec: ModelSpec, w: np.ndarray, batch: Batch) -> np.ndarray:
    return loss_and_gradient(spec, w, batch)[1]


def logits(spec: ModelSpec, w: np.ndarray, features: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(features, dtype=np.float64)
    _check_inputs(spec, w, X)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if spec.kind == "softmax_regression":
        return kernels.softmax_logits(w, X, spec.num_classes)
    return kernels.mlp_logits(w, X, spec.hidden_dim, spec.num_classes)


def accuracy(spec: ModelSpec, w: np.ndarray, dataset) -> float:
    """Fraction of examples whose argmax logit matches the label.

    Ties break toward the lowest class index. ``dataset`` is anything with
    ``features`` and ``labels`` arrays (a Dataset, a Batch, ...).
    """
    X = np.ascontiguousarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels)
    if X.shape[0] == 0:
        raise ValueError("cannot score an empty dataset")
    pred = np.argmax(logits(spec, w, X), axis=1)
    return float(np.mean(pred == y))
