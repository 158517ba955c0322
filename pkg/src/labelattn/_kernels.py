"""Hot numeric kernels with two interchangeable backends.

The numba backend jit-compiles fused loops; the numpy backend is a
vectorized fallback used when numba is unavailable or when the environment
variable ``LABELATTN_NO_NUMBA`` is set to ``1``/``true``. Both backends are
kept importable side by side (see ``IMPLEMENTATIONS``) so the test suite and
``benchmarks/bench_kernels.py`` can compare them directly.

All kernels take contiguous float64 / int64 arrays. Elementwise kernels work
on flat 1-D views; callers reshape.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = os.environ.get("LABELATTN_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _ENV_FLAG in ("1", "true", "yes")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via LABELATTN_NO_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy backend (vectorized)
# ---------------------------------------------------------------------------


def _sigmoid_np(x):
    """1/(1+exp(-x)), branch on sign so exp never overflows."""
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax2d_np(z):
    """Row-wise softmax with max-subtraction."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _binarize_np(y, k, t):
    return _sigmoid_np(k * (y - t))


def _bce_forward_np(pred, target, eps):
    p = np.clip(pred, eps, 1.0 - eps)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))


def _bce_grad_pred_np(pred, target, eps):
    # zero gradient where the clamp is active
    p = np.clip(pred, eps, 1.0 - eps)
    inside = (pred > eps) & (pred < 1.0 - eps)
    g = -(target / p - (1.0 - target) / (1.0 - p)) / pred.size
    return np.where(inside, g, 0.0)


def _bce_grad_target_np(pred, target, eps):
    p = np.clip(pred, eps, 1.0 - eps)
    return -(np.log(p) - np.log1p(-p)) / pred.size


def _adam_update_np(param, grad, m, v, t, lr, beta1, beta2, eps):
    m2 = beta1 * m + (1.0 - beta1) * grad
    v2 = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m2 / (1.0 - beta1**t)
    v_hat = v2 / (1.0 - beta2**t)
    p2 = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p2, m2, v2


def _weighted_label_fwd_np(weights, labels):
    # weights [B, M], labels [M, B, N] -> [B, N]
    return np.einsum("bm,mbn->bn", weights, labels)


def _weighted_label_grad_np(grad_out, labels):
    # grad_out [B, N], labels [M, B, N] -> [B, M]
    return np.einsum("bn,mbn->bm", grad_out, labels)


def _corrupt_draw_np(clean, cum_rows, uniforms):
    picked = cum_rows[clean]  # [S, N]
    idx = np.sum(picked <= uniforms[:, None], axis=1)
    n = cum_rows.shape[1]
    return np.minimum(idx, n - 1).astype(np.int64)


# ---------------------------------------------------------------------------
# numba backend (fused loops; jitted below when available)
# ---------------------------------------------------------------------------


def _sigmoid_loop(x):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + np.exp(-v))
        else:
            e = np.exp(v)
            out[i] = e / (1.0 + e)
    return out


def _softmax2d_loop(z):
    rows, cols = z.shape
    out = np.empty_like(z)
    for r in range(rows):
        hi = z[r, 0]
        for c in range(1, cols):
            if z[r, c] > hi:
                hi = z[r, c]
        total = 0.0
        for c in range(cols):
            e = np.exp(z[r, c] - hi)
            out[r, c] = e
            total += e
        for c in range(cols):
            out[r, c] /= total
    return out


def _binarize_loop(y, k, t):
    out = np.empty_like(y)
    for i in range(y.size):
        v = k * (y[i] - t)
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + np.exp(-v))
        else:
            e = np.exp(v)
            out[i] = e / (1.0 + e)
    return out


def _bce_forward_loop(pred, target, eps):
    total = 0.0
    hi = 1.0 - eps
    for i in range(pred.size):
        p = pred[i]
        if p < eps:
            p = eps
        elif p > hi:
            p = hi
        total += target[i] * np.log(p) + (1.0 - target[i]) * np.log1p(-p)
    return -total / pred.size


def _bce_grad_pred_loop(pred, target, eps):
    out = np.zeros_like(pred)
    hi = 1.0 - eps
    inv_n = 1.0 / pred.size
    for i in range(pred.size):
        p = pred[i]
        if eps < p < hi:
            out[i] = -(target[i] / p - (1.0 - target[i]) / (1.0 - p)) * inv_n
    return out


def _bce_grad_target_loop(pred, target, eps):
    out = np.empty_like(pred)
    hi = 1.0 - eps
    inv_n = 1.0 / pred.size
    for i in range(pred.size):
        p = pred[i]
        if p < eps:
            p = eps
        elif p > hi:
            p = hi
        out[i] = -(np.log(p) - np.log1p(-p)) * inv_n
    return out


def _adam_update_loop(param, grad, m, v, t, lr, beta1, beta2, eps):
    p2 = np.empty_like(param)
    m2 = np.empty_like(m)
    v2 = np.empty_like(v)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(param.size):
        g = grad[i]
        m2[i] = beta1 * m[i] + (1.0 - beta1) * g
        v2[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        p2[i] = param[i] - lr * (m2[i] / c1) / (np.sqrt(v2[i] / c2) + eps)
    return p2, m2, v2


def _weighted_label_fwd_loop(weights, labels):
    n_sets, batch, n_cls = labels.shape
    out = np.zeros((batch, n_cls), dtype=np.float64)
    for m in range(n_sets):
        for b in range(batch):
            w = weights[b, m]
            for c in range(n_cls):
                out[b, c] += w * labels[m, b, c]
    return out


def _weighted_label_grad_loop(grad_out, labels):
    n_sets, batch, n_cls = labels.shape
    out = np.zeros((batch, n_sets), dtype=np.float64)
    for m in range(n_sets):
        for b in range(batch):
            acc = 0.0
            for c in range(n_cls):
                acc += grad_out[b, c] * labels[m, b, c]
            out[b, m] = acc
    return out


def _corrupt_draw_loop(clean, cum_rows, uniforms):
    n = cum_rows.shape[1]
    out = np.empty(clean.size, dtype=np.int64)
    for s in range(clean.size):
        row = cum_rows[clean[s]]
        u = uniforms[s]
        lo, hi = 0, n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if row[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        out[s] = lo
    return out


_NUMPY_IMPL = {
    "sigmoid": _sigmoid_np,
    "softmax2d": _softmax2d_np,
    "binarize": _binarize_np,
    "bce_forward": _bce_forward_np,
    "bce_grad_pred": _bce_grad_pred_np,
    "bce_grad_target": _bce_grad_target_np,
    "adam_update": _adam_update_np,
    "weighted_label_fwd": _weighted_label_fwd_np,
    "weighted_label_grad": _weighted_label_grad_np,
    "corrupt_draw": _corrupt_draw_np,
}

IMPLEMENTATIONS = {"numpy": _NUMPY_IMPL}

if HAVE_NUMBA:
    _jit = _njit(cache=True)
    _NUMBA_IMPL = {
        "sigmoid": _jit(_sigmoid_loop),
        "softmax2d": _jit(_softmax2d_loop),
        "binarize": _jit(_binarize_loop),
        "bce_forward": _jit(_bce_forward_loop),
        "bce_grad_pred": _jit(_bce_grad_pred_loop),
        "bce_grad_target": _jit(_bce_grad_target_loop),
        "adam_update": _jit(_adam_update_loop),
        "weighted_label_fwd": _jit(_weighted_label_fwd_loop),
        "weighted_label_grad": _jit(_weighted_label_grad_loop),
        "corrupt_draw": _jit(_corrupt_draw_loop),
    }
    IMPLEMENTATIONS["numba"] = _NUMBA_IMPL
    BACKEND = "numba"
    _ACTIVE = _NUMBA_IMPL
else:
    BACKEND = "numpy"
    _ACTIVE = _NUMPY_IMPL

sigmoid = _ACTIVE["sigmoid"]
softmax2d = _ACTIVE["softmax2d"]
binarize = _ACTIVE["binarize"]
bce_forward = _ACTIVE["bce_forward"]
bce_grad_pred = _ACTIVE["bce_grad_pred"]
bce_grad_target = _ACTIVE["bce_grad_target"]
adam_update = _ACTIVE["adam_update"]
weighted_label_fwd = _ACTIVE["weighted_label_fwd"]
weighted_label_grad = _ACTIVE["weighted_label_grad"]
corrupt_draw = _ACTIVE["corrupt_draw"]
