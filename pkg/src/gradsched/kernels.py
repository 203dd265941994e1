"""Hot numeric kernels: batched cross-entropy loss, gradients and logits.

Two interchangeable backends live side by side. The default is a set of
numba ``@njit`` kernels written as explicit loops (compiled on first call,
cached on disk); a pure numpy path serves both as the fallback when numba
is not importable and as an independent implementation for cross-checks
and benchmarks. Selection happens once at import time:

    GRADSCHED_BACKEND=numba    force numba, fail loudly if unavailable
    GRADSCHED_BACKEND=numpy    force the numpy path
    unset or "auto"            numba when importable, else numpy

Both backends compute the same quantities but in different summation
orders, so they agree to roughly 1e-13 relative, not bitwise. Any single
run is deterministic for a fixed backend.

Parameter layout (shared with the model layer): a softmax regression over
D features and C classes stores a (D+1, C) matrix row-major in a flat
vector, the last row being the class biases. The one-hidden-layer net
stores the (D+1, H) input block followed by the (H+1, C) output block.
Labels must be int64, features float64, both C-contiguous.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "available_backends",
    "get_backend",
    "softmax_loss_grad",
    "softmax_logits",
    "mlp_loss_grad",
    "mlp_logits",
]


# ---------------------------------------------------------------------------
# numpy backend

def _np_softmax_logits(w, X, C):
    B, D = X.shape
    W = w.reshape(D + 1, C)
    return X @ W[:D] + W[D]


def _np_softmax_loss_grad(w, X, y, C):
    B, D = X.shape
    logits = _np_softmax_logits(w, X, C)
    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    Z = ex.sum(axis=1, keepdims=True)
    logp = logits - m - np.log(Z)
    loss = -float(np.mean(logp[np.arange(B), y]))
    P = ex / Z
    P[np.arange(B), y] -= 1.0
    P /= B
    grad = np.empty((D + 1, C), dtype=np.float64)
    grad[:D] = X.T @ P
    grad[D] = P.sum(axis=0)
    return loss, grad.ravel()


def _np_mlp_logits(w, X, H, C):
    B, D = X.shape
    n1 = (D + 1) * H
    W1 = w[:n1].reshape(D + 1, H)
    W2 = w[n1:].reshape(H + 1, C)
    A = np.tanh(X @ W1[:D] + W1[D])
    return A @ W2[:H] + W2[H]


def _np_mlp_loss_grad(w, X, y, H, C):
    B, D = X.shape
    n1 = (D + 1) * H
    W1 = w[:n1].reshape(D + 1, H)
    W2 = w[n1:].reshape(H + 1, C)
    A = np.tanh(X @ W1[:D] + W1[D])
    logits = A @ W2[:H] + W2[H]
    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    Z = ex.sum(axis=1, keepdims=True)
    logp = logits - m - np.log(Z)
    loss = -float(np.mean(logp[np.arange(B), y]))
    P = ex / Z
    P[np.arange(B), y] -= 1.0
    P /= B
    g2 = np.empty((H + 1, C), dtype=np.float64)
    g2[:H] = A.T @ P
    g2[H] = P.sum(axis=0)
    dZ = (P @ W2[:H].T) * (1.0 - A * A)
    g1 = np.empty((D + 1, H), dtype=np.float64)
    g1[:D] = X.T @ dZ
    g1[D] = dZ.sum(axis=0)
    return loss, np.concatenate([g1.ravel(), g2.ravel()])


# ---------------------------------------------------------------------------
# numba backend (loop kernels; same math, explicit summation)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_softmax_logits(w, X, C):
        B, D = X.shape
        W = w.reshape(D + 1, C)
        out = np.empty((B, C), dtype=np.float64)
        for b in range(B):
            for c in range(C):
                s = W[D, c]
                for d in range(D):
                    s += X[b, d] * W[d, c]
                out[b, c] = s
        return out

    @njit(cache=True)
    def _nb_softmax_loss_grad(w, X, y, C):
        B, D = X.shape
        W = w.reshape(D + 1, C)
        grad = np.zeros((D + 1, C), dtype=np.float64)
        loss = 0.0
        logits = np.empty(C, dtype=np.float64)
        for b in range(B):
            mx = -np.inf
            for c in range(C):
                s = W[D, c]
                for d in range(D):
                    s += X[b, d] * W[d, c]
                logits[c] = s
                if s > mx:
                    mx = s
            Z = 0.0
            for c in range(C):
                Z += np.exp(logits[c] - mx)
            loss += mx + np.log(Z) - logits[y[b]]
            for c in range(C):
                p = np.exp(logits[c] - mx) / Z
                if c == y[b]:
                    p -= 1.0
                p /= B
                for d in range(D):
                    grad[d, c] += X[b, d] * p
                grad[D, c] += p
        return loss / B, grad.ravel()

    @njit(cache=True)
    def _nb_mlp_logits(w, X, H, C):
        B, D = X.shape
        n1 = (D + 1) * H
        W1 = w[:n1].reshape(D + 1, H)
        W2 = w[n1:].reshape(H + 1, C)
        out = np.empty((B, C), dtype=np.float64)
        for b in range(B):
            a = np.empty(H, dtype=np.float64)
            for h in range(H):
                s = W1[D, h]
                for d in range(D):
                    s += X[b, d] * W1[d, h]
                a[h] = np.tanh(s)
            for c in range(C):
                s = W2[H, c]
                for h in range(H):
                    s += a[h] * W2[h, c]
                out[b, c] = s
        return out

    @njit(cache=True)
    def _nb_mlp_loss_grad(w, X, y, H, C):
        B, D = X.shape
        n1 = (D + 1) * H
        W1 = w[:n1].reshape(D + 1, H)
        W2 = w[n1:].reshape(H + 1, C)
        g1 = np.zeros((D + 1, H), dtype=np.float64)
        g2 = np.zeros((H + 1, C), dtype=np.float64)
        loss = 0.0
        a = np.empty(H, dtype=np.float64)
        logits = np.empty(C, dtype=np.float64)
        p = np.empty(C, dtype=np.float64)
        for b in range(B):
            for h in range(H):
                s = W1[D, h]
                for d in range(D):
                    s += X[b, d] * W1[d, h]
                a[h] = np.tanh(s)
            mx = -np.inf
            for c in range(C):
                s = W2[H, c]
                for h in range(H):
                    s += a[h] * W2[h, c]
                logits[c] = s
                if s > mx:
                    mx = s
            Z = 0.0
            for c in range(C):
                Z += np.exp(logits[c] - mx)
            loss += mx + np.log(Z) - logits[y[b]]
            for c in range(C):
                p[c] = np.exp(logits[c] - mx) / Z
                if c == y[b]:
                    p[c] -= 1.0
                p[c] /= B
                for h in range(H):
                    g2[h, c] += a[h] * p[c]
                g2[H, c] += p[c]
            for h in range(H):
                dz = 0.0
                for c in range(C):
                    dz += p[c] * W2[h, c]
                dz *= 1.0 - a[h] * a[h]
                for d in range(D):
                    g1[d, h] += X[b, d] * dz
                g1[D, h] += dz
        flat = np.empty(n1 + (H + 1) * C, dtype=np.float64)
        flat[:n1] = g1.ravel()
        flat[n1:] = g2.ravel()
        return loss / B, flat


_NUMPY_BACKEND = {
    "softmax_loss_grad": _np_softmax_loss_grad,
    "softmax_logits": _np_softmax_logits,
    "mlp_loss_grad": _np_mlp_loss_grad,
    "mlp_logits": _np_mlp_logits,
}

_NUMBA_BACKEND = (
    {
        "softmax_loss_grad": _nb_softmax_loss_grad,
        "softmax_logits": _nb_softmax_logits,
        "mlp_loss_grad": _nb_mlp_loss_grad,
        "mlp_logits": _nb_mlp_logits,
    }
    if _HAVE_NUMBA
    else None
)


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


def get_backend(name: str) -> dict:
    """Kernel table for an explicit backend, for benchmarks and cross-checks."""
    if name == "numpy":
        return _NUMPY_BACKEND
    if name == "numba":
        if _NUMBA_BACKEND is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return _NUMBA_BACKEND
    raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")


def _select() -> str:
    choice = os.environ.get("GRADSCHED_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if _HAVE_NUMBA else "numpy"
    if choice in ("numba", "numpy"):
        return choice
    raise RuntimeError(
        f"GRADSCHED_BACKEND={choice!r} not recognized: use 'numba', 'numpy' or 'auto'"
    )


BACKEND = _select()
_active = get_backend(BACKEND)

softmax_loss_grad = _active["softmax_loss_grad"]
softmax_logits = _active["softmax_logits"]
mlp_loss_grad = _active["mlp_loss_grad"]
mlp_logits = _active["mlp_logits"]


def warmup() -> None:
    """Trigger JIT compilation of the active kernels on tiny inputs."""
    X = np.zeros((2, 3), dtype=np.float64)
    y = np.zeros(2, dtype=np.int64)
    w_s = np.zeros(4 * 2, dtype=np.float64)
    softmax_loss_grad(w_s, X, y, 2)
    softmax_logits(w_s, X, 2)
    w_m = np.zeros(4 * 3 + 4 * 2, dtype=np.float64)
    mlp_loss_grad(w_m, X, y, 3, 2)
    mlp_logits(w_m, X, 3, 2)
