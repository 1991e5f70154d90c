"""Numeric kernels shared by the planner policy and the retrieval scan.

Every kernel exists twice: a numba ``@njit`` build and a pure-numpy build
with identical semantics. The numba path is selected when numba imports
cleanly and the environment variable ``STRATREC_NUMBA`` is not ``"0"``;
``benchmarks/bench_kernels.py`` times the two side by side.

Kernels keep a fixed accumulation order so repeated runs on one path are
bit-reproducible. fastmath stays off for the same reason.
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("STRATREC_NUMBA", "1") != "0"

try:  # pragma: no cover - exercised indirectly through both CI paths
    if not _WANT_NUMBA:
        raise ImportError("numba disabled via STRATREC_NUMBA=0")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USING_NUMBA = HAVE_NUMBA and _WANT_NUMBA


# ---------------------------------------------------------------------------
# numpy builds
# ---------------------------------------------------------------------------

def _sparse_logits_np(weights: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    return weights[:, idx] @ vals


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _add_outer_np(grad: np.ndarray, idx: np.ndarray, vals: np.ndarray, coeff: np.ndarray) -> None:
    # idx is unique per feature vector, so fancy-index += is safe
    grad[:, idx] += np.outer(coeff, vals)


def _adamw_step_np(
    w: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    g: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
    step: int,
) -> None:
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    w -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * w)


def _matvec_scores_np(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    return mat @ q


# ---------------------------------------------------------------------------
# numba builds
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sparse_logits_nb(weights, idx, vals):  # pragma: no cover - numba path
    n_rows = weights.shape[0]
    out = np.zeros(n_rows, dtype=np.float64)
    for k in range(n_rows):
        acc = 0.0
        for j in range(idx.shape[0]):
            acc += weights[k, idx[j]] * vals[j]
        out[k] = acc
    return out


@njit(cache=True)
def _softmax_nb(logits):  # pragma: no cover - numba path
    n = logits.shape[0]
    mx = logits[0]
    for i in range(1, n):
        if logits[i] > mx:
            mx = logits[i]
    out = np.empty(n, dtype=np.float64)
    total = 0.0
    for i in range(n):
        out[i] = np.exp(logits[i] - mx)
        total += out[i]
    for i in range(n):
        out[i] /= total
    return out


@njit(cache=True)
def _add_outer_nb(grad, idx, vals, coeff):  # pragma: no cover - numba path
    for k in range(coeff.shape[0]):
        c = coeff[k]
        for j in range(idx.shape[0]):
            grad[k, idx[j]] += c * vals[j]


@njit(cache=True)
def _adamw_step_nb(w, m, v, g, lr, beta1, beta2, eps, weight_decay, step):  # pragma: no cover
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for k in range(w.shape[0]):
        for j in range(w.shape[1]):
            gkj = g[k, j]
            m[k, j] = beta1 * m[k, j] + (1.0 - beta1) * gkj
            v[k, j] = beta2 * v[k, j] + (1.0 - beta2) * gkj * gkj
            mhat = m[k, j] / bc1
            vhat = v[k, j] / bc2
            w[k, j] -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * w[k, j])


@njit(cache=True)
def _matvec_scores_nb(mat, q):  # pragma: no cover - numba path
    n = mat.shape[0]
    d = mat.shape[1]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += mat[i, j] * q[j]
        out[i] = acc
    return out


if USING_NUMBA:
    sparse_logits = _sparse_logits_nb
    softmax = _softmax_nb
    add_outer = _add_outer_nb
    adamw_step = _adamw_step_nb
    matvec_scores = _matvec_scores_nb
else:
    sparse_logits = _sparse_logits_np
    softmax = _softmax_np
    add_outer = _add_outer_np
    adamw_step = _adamw_step_np
    matvec_scores = _matvec_scores_np

NUMPY_KERNELS = {
    "sparse_logits": _sparse_logits_np,
    "softmax": _softmax_np,
    "add_outer": _add_outer_np,
    "adamw_step": _adamw_step_np,
    "matvec_scores": _matvec_scores_np,
}

NUMBA_KERNELS = {
    "sparse_logits": _sparse_logits_nb,
    "softmax": _softmax_nb,
    "add_outer": _add_outer_nb,
    "adamw_step": _adamw_step_nb,
    "matvec_scores": _matvec_scores_nb,
}


def warmup() -> None:
    """Trigger JIT compilation so timed sections do not pay for it."""
    idx = np.array([0, 2], dtype=np.int64)
    vals = np.array([1.0, 0.5])
    w = np.zeros((3, 4))
    sparse_logits(w, idx, vals)
    softmax(np.zeros(3))
    add_outer(np.zeros((3, 4)), idx, vals, np.ones(3))
    adamw_step(w, np.zeros((3, 4)), np.zeros((3, 4)), np.ones((3, 4)), 0.1, 0.9, 0.999, 1e-8, 0.0, 1)
    matvec_scores(np.ones((2, 4)), np.ones(4))
