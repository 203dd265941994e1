"""Update rules and schedules shared by every policy.

Momentum follows v' = alpha*v - eta*g with the parameter delta equal to
v'. The variance-reduced local gradient is the usual three-term form
around a snapshot: batch gradient at the working point, minus the batch
gradient at the snapshot, plus the snapshot's full gradient; at the
snapshot point the two batch terms cancel exactly.
"""

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .models import Batch, ModelSpec, gradient


@dataclass(frozen=True)
class Hyperparams:
    eta0: float
    alpha: float = 0.9
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.5
    batch_size: int = 100

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        object.__setattr__(self, "decay_epochs", tuple(self.decay_epochs))
        if any(e < 0 for e in self.decay_epochs):
            raise ValueError("decay epochs must be non-negative")
        if any(
            a >= b for a, b in zip(self.decay_epochs, self.decay_epochs[1:])
        ):
            raise ValueError(
                f"decay epochs must be strictly increasing, got {self.decay_epochs}"
            )
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(
                f"decay_factor must lie in (0, 1], got {self.decay_factor}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class SvrgSnapshot:
    """Anchor parameters and their full-data gradient for one outer loop."""

    params: np.ndarray
    full_grad: np.ndarray

    def __post_init__(self):
        if self.params.shape != self.full_grad.shape:
            raise ValueError("snapshot gradient does not match parameter shape")


def momentum_step(v: np.ndarray, g: np.ndarray, alpha: float, eta: float):
    """Return (v', delta_w) with v' = alpha*v - eta*g and delta_w = v'."""
    if v.shape != g.shape:
        raise ValueError(f"velocity/gradient mismatch: {v.shape} vs {g.shape}")
    v_new = alpha * v - eta * g
    return v_new, v_new


def svrg_local_gradient(
    spec: ModelSpec, w: np.ndarray, snapshot: SvrgSnapshot, batch: Batch
) -> np.ndarray:
    if w.shape != snapshot.params.shape:
        raise ValueError("working point does not match snapshot shape")
    g_w = gradient(spec, w, batch)
    g_anchor = gradient(spec, snapshot.params, batch)
    return g_w - g_anchor + snapshot.full_grad


def lr_at(h: Hyperparams, epoch: int) -> float:
    """Stepwise-decayed rate: eta0 * factor^(number of decay epochs <= epoch)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return h.eta0 * h.decay_factor ** bisect_right(h.decay_epochs, epoch)


def no_momentum_eta(h: Hyperparams) -> float:
    """Base rate for momentumless policies: 10x the momentum-bearing rate."""
    return 10.0 * h.eta0
