"""Differentiable primitives.

Each primitive validates shapes, computes its value with numpy and registers a
backward rule on the active tape. Broadcasting is deliberately not implicit:
the only broadcasting ops are :func:`add_bias` and :func:`scale`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from declml.autodiff.tensor import Tensor, record
from declml.errors import IndexOutOfRange, ShapeMismatch


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul: expected rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner extents differ, {a.shape} x {b.shape}")
    A, B = a.data, b.data
    out = Tensor.wrap(A @ B)

    def back(g):
        return g @ B.T, A.T @ g

    return record("matmul", out, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    out = Tensor.wrap(a.data + b.data)
    return record("add", out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    out = Tensor.wrap(a.data - b.data)
    return record("sub", out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    out = Tensor.wrap(A * B)
    return record("mul", out, (a, b), lambda g: (g * B, g * A))


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant scalar."""
    c = np.asarray(factor, dtype=x.dtype)
    out = Tensor.wrap(x.data * c)
    return record("scale", out, (x,), lambda g: (g * c,))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a bias row ``bias[n]`` to every row of ``x[..., n]``."""
    if bias.data.ndim != 1 or x.data.ndim < 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeMismatch(f"add_bias: cannot add bias {bias.shape} to {x.shape}")
    out = Tensor.wrap(x.data + bias.data)
    lead = tuple(range(x.data.ndim - 1))

    def back(g):
        return g, g.sum(axis=lead) if lead else g

    return record("add_bias", out, (x, bias), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor.wrap(np.where(mask, x.data, np.zeros((), dtype=x.dtype)))
    return record("relu", out, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor.wrap(y)
    return record("tanh", out, (x,), lambda g: (g * (1 - y * y),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    half = np.asarray(0.5, dtype=z.dtype)
    return half * (1 + np.tanh(half * z))


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(x.data)
    out = Tensor.wrap(y)
    return record("sigmoid", out, (x,), lambda g: (g * y * (1 - y),))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "linear": identity}


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate on the last axis; all leading extents must agree."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat: no inputs")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeMismatch(f"concat: leading extents differ, {tensors[0].shape} vs {t.shape}")
    widths = [t.shape[-1] for t in tensors]
    out = Tensor.wrap(np.concatenate([t.data for t in tensors], axis=-1))
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[..., bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return record("concat", out, tensors, back)


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    out = Tensor.wrap(np.asarray(x.data.sum(axis=axis)))
    shape = x.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return record("sum", out, (x,), back)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    if n == 0:
        raise ShapeMismatch(f"mean: empty reduction over shape {x.shape}")
    out = Tensor.wrap(np.asarray(x.data.mean(axis=axis)))
    shape = x.shape
    inv = np.asarray(1.0 / n, dtype=x.dtype)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g * inv, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g * inv, axis), shape).copy(),)

    return record("mean", out, (x,), back)


def embedding_lookup(table: Tensor, indices: Tensor | np.ndarray) -> Tensor:
    """Gather rows of ``table[V, d]``; output shape is ``indices.shape + (d,)``."""
    idx = indices.data if isinstance(indices, Tensor) else np.asarray(indices)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"embedding_lookup: table must be rank 2, got {table.shape}")
    if idx.dtype.kind not in "iu":
        raise ShapeMismatch("embedding_lookup: indices must be integers")
    V = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= V):
        raise IndexOutOfRange(f"embedding_lookup: indices must lie in [0, {V})")
    out = Tensor.wrap(table.data[idx])

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return record("embedding_lookup", out, (table,), back)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of ``x[B, L, d]`` over positions where ``mask[B, L]`` is set.

    Rows with no selected position yield zeros.
    """
    m = np.asarray(mask, dtype=x.dtype)
    if x.data.ndim != 3 or m.shape != x.shape[:2]:
        raise ShapeMismatch(f"masked_mean: mask {m.shape} does not match {x.shape}")
    counts = np.maximum(m.sum(axis=1, keepdims=True), 1)
    w = (m / counts)[..., None]
    out = Tensor.wrap((x.data * w).sum(axis=1))

    def back(g):
        return (g[:, None, :] * w,)

    return record("masked_mean", out, (x,), back)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid_values(logits: np.ndarray) -> np.ndarray:
    return _stable_sigmoid(logits)


def softmax_cross_entropy(logits: Tensor, targets: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``.

    Returns ``(loss, probabilities)``; probabilities are not tracked.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if logits.data.ndim != 2 or t.shape != (logits.shape[0],):
        raise ShapeMismatch(f"softmax_cross_entropy: logits {logits.shape} vs targets {t.shape}")
    B, C = logits.shape
    if t.size and (t.min() < 0 or t.max() >= C):
        raise IndexOutOfRange(f"softmax_cross_entropy: targets must lie in [0, {C})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    probs = np.exp(z - lse[:, None])
    rows = np.arange(B)
    if B == 0:
        loss = np.zeros((), dtype=logits.dtype)
    else:
        loss = np.asarray((lse - z[rows, t]).mean(), dtype=logits.dtype)
    out = Tensor.wrap(loss)

    def back(g):
        d = probs.copy()
        d[rows, t] -= 1
        return (d * (g / max(B, 1)),)

    return record("softmax_cross_entropy", out, (logits,), back), Tensor.wrap(probs)


def sigmoid_bce(logits: Tensor, targets: Tensor | np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits, in the overflow-free form."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if t.shape != logits.shape:
        raise ShapeMismatch(f"sigmoid_bce: logits {logits.shape} vs targets {t.shape}")
    x = logits.data
    t = t.astype(x.dtype, copy=False)
    n = x.size
    per = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    loss = np.asarray(per.mean() if n else 0.0, dtype=x.dtype)
    out = Tensor.wrap(loss)

    def back(g):
        return ((_stable_sigmoid(x) - t) * (g / max(n, 1)),)

    return record("sigmoid_bce", out, (logits,), back)


def mse(pred: Tensor, targets: Tensor | np.ndarray) -> Tensor:
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if t.shape != pred.shape:
        raise ShapeMismatch(f"mse: predictions {pred.shape} vs targets {t.shape}")
    diff = pred.data - t.astype(pred.dtype, copy=False)
    n = diff.size
    out = Tensor.wrap(np.asarray((diff * diff).mean() if n else 0.0, dtype=pred.dtype))

    def back(g):
        return (diff * (2 * g / max(n, 1)),)

    return record("mse", out, (pred,), back)
