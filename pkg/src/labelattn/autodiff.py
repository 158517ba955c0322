"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a float64 numpy array. Every differentiable
operation attaches a :class:`TapeNode` to its output recording the input
tensors and a closure that maps the output gradient to input gradients.
:func:`backward` replays the recorded graph so that every consumer is
visited before its producer, accumulating gradients additively into the
``grad`` buffers of all tensors that require them. :func:`detach` returns a
value-equal tensor severed from the graph: no later backward pass can reach
the original producers through it.

Graphs are plain per-tensor links; there is no global registry, so tensors
can move freely between threads as values while any single backward pass
stays on one thread.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import _kernels as K

BCE_EPS = 1e-7


class TapeNode:
    """One recorded operation: ordered inputs plus a local-gradient closure."""

    __slots__ = ("inputs", "grad_fn")

    def __init__(self, inputs: tuple, grad_fn: Callable):
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tensor:
    """Dense float64 array participating in the gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, *, node: TapeNode | None = None,
                 copy: bool = True):
        self.data = np.array(data, dtype=np.float64, copy=copy)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor_new(shape: Sequence[int], values: Sequence[float], requires_grad: bool = False) -> Tensor:
    """Build a tensor from an explicit shape and row-major values."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("shape must be nonempty")
    if any(s <= 0 for s in shape):
        raise ValueError(f"shape entries must be positive, got {shape}")
    values = np.asarray(values, dtype=np.float64).ravel()
    expected = int(np.prod(shape))
    if values.size != expected:
        raise ValueError(f"length mismatch: shape {shape} needs {expected} values, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    return Tensor(values.reshape(shape), requires_grad=requires_grad, copy=True)


def constant(data) -> Tensor:
    """Wrap array-like data as a non-differentiable tensor."""
    return Tensor(data, requires_grad=False, copy=True)


def make_op(data: np.ndarray, inputs: tuple, grad_fn: Callable) -> Tensor:
    """Create an op output, recording a tape node only if some input needs grads."""
    requires = any(t.requires_grad for t in inputs)
    node = TapeNode(inputs, grad_fn) if requires else None
    return Tensor(data, requires_grad=requires, node=node, copy=False)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner-dimension mismatch: {a.shape} @ {b.shape}")

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return make_op(a.data @ b.data, (a, b), grad_fn)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in {op}: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_op(a.data * c, (a,), lambda g: (g * c,))


def scalar_add(a: Tensor, c: float) -> Tensor:
    return make_op(a.data + float(c), (a,), lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a bias row vector to every row of a matrix."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ValueError(f"add_bias expects [B,D] + [D], got {x.shape} and {b.shape}")
    return make_op(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def sigmoid(x: Tensor) -> Tensor:
    y = K.sigmoid(np.ascontiguousarray(x.data).ravel()).reshape(x.shape)
    return make_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.data > 0.0
    return make_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softmax(z: Tensor) -> Tensor:
    """Softmax over the last axis of a vector or a batch of row vectors."""
    if z.data.ndim == 1:
        w = K.softmax2d(np.ascontiguousarray(z.data).reshape(1, -1)).reshape(z.shape)
    elif z.data.ndim == 2:
        w = K.softmax2d(np.ascontiguousarray(z.data))
    else:
        raise ValueError(f"softmax expects a vector or matrix, got {z.shape}")

    def grad_fn(g):
        dot = np.sum(g * w, axis=-1, keepdims=True)
        return (w * (g - dot),)

    return make_op(w, (z,), grad_fn)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ValueError("concat of an empty list")
    ndim = parts[0].data.ndim
    for p in parts[1:]:
        if p.data.ndim != ndim:
            raise ValueError("concat parts differ in rank")
        for ax in range(ndim):
            if ax != (axis % ndim) and p.shape[ax] != parts[0].shape[ax]:
                raise ValueError(f"concat shape mismatch on axis {ax}: {p.shape} vs {parts[0].shape}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return make_op(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), grad_fn)


def sum_all(x: Tensor) -> Tensor:
    return make_op(np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),))


def bce_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross entropy over all elements.

    Predictions are clamped to [BCE_EPS, 1 - BCE_EPS] before the logs. The
    loss is differentiable with respect to both the predictions and the
    targets; the target-side gradient is -(log p - log(1-p)) / size.
    """
    _check_same_shape(pred, target, "bce_loss")
    p = np.ascontiguousarray(pred.data).ravel()
    y = np.ascontiguousarray(target.data).ravel()
    value = K.bce_forward(p, y, BCE_EPS)
    if not np.isfinite(value):
        raise ValueError("bce_loss produced a non-finite value")

    def grad_fn(g):
        s = float(g)
        gp = s * K.bce_grad_pred(p, y, BCE_EPS).reshape(pred.shape)
        gy = s * K.bce_grad_target(p, y, BCE_EPS).reshape(target.shape)
        return gp, gy

    return make_op(np.array(value), (pred, target), grad_fn)


def detach(x: Tensor) -> Tensor:
    """Value-equal tensor severed from the gradient graph."""
    return Tensor(x.data.copy(), requires_grad=False)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    """Producers-before-consumers order of every tensor reachable from root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in reversed(t.node.inputs):
                stack.append((inp, False))
    return order


def _pullback(loss: Tensor) -> tuple[list[Tensor], dict[int, np.ndarray]]:
    order = _toposort(loss)
    acc: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = acc.get(id(t))
        if g is None or t.node is None:
            continue
        for inp, gi in zip(t.node.inputs, t.node.grad_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            prev = acc.get(id(inp))
            acc[id(inp)] = gi if prev is None else prev + gi
    return order, acc


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every requires-grad ancestor of a scalar loss.

    Accumulation is additive: calling backward twice without clearing the
    buffers doubles the gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    order, acc = _pullback(loss)
    for t in order:
        if not t.requires_grad:
            continue
        g = acc.get(id(t))
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64).reshape(t.shape)
        t.grad = g.copy() if t.grad is None else t.grad + g


def gradients(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient arrays of a scalar loss w.r.t. given tensors, without touching
    any ``grad`` buffer. Unreached tensors get zeros."""
    if loss.data.size != 1:
        raise ValueError(f"gradients requires a scalar loss, got shape {loss.shape}")
    _, acc = _pullback(loss)
    out = []
    for t in wrt:
        g = acc.get(id(t))
        out.append(np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape).copy())
    return out


def finite_diff_grad(f: Callable[[Tensor], "Tensor | float"], x: Tensor, eps: float = 1e-5) -> Tensor:
    """Central-difference gradient estimate of a scalar function of x."""

    def evaluate(arr: np.ndarray) -> float:
        res = f(Tensor(arr, requires_grad=False, copy=True))
        return res.item() if isinstance(res, Tensor) else float(res)

    base = x.data.copy()
    flat = base.ravel()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = evaluate(base)
        flat[i] = orig - eps
        lo = evaluate(base)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return Tensor(out.reshape(x.shape), copy=False)
