"""Differentiable operations on :class:`Tensor`.

No implicit broadcasting: operands of binary ops must have identical
shapes, except for the scalar helpers ``scale`` and ``shift``. Row
expansion is spelled out with ``repeat_rows`` / ``tile``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DimensionError, Tensor, make_result

LOG_CLAMP = 1e-12


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2-D operands, or batched product of 3-D operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: inner extents {a.shape} @ {b.shape}")
    elif a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise DimensionError(f"matmul: batched extents {a.shape} @ {b.shape}")
    else:
        raise DimensionError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def back(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return make_result("matmul", av @ bv, (a, b), back)


def ewise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Elementwise ``mul``, ``add`` or ``sub`` of equal-shaped tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, f"ewise[{kind}]")
    av, bv = a.values, b.values
    if kind == "mul":
        return make_result("mul", av * bv, (a, b), lambda g: (g * bv, g * av))
    if kind == "add":
        return make_result("add", av + bv, (a, b), lambda g: (g, g))
    if kind == "sub":
        return make_result("sub", av - bv, (a, b), lambda g: (g, -g))
    raise ValueError(f"unknown ewise kind {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return ewise(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return ewise(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return ewise(a, b, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result("scale", x.values * c, (x,), lambda g: (g * c,))


def shift(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result("shift", x.values + c, (x,), lambda g: (g,))


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return make_result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)
    return make_result("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return make_result("relu", np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", out, (x,), back)


def log(x: Tensor, floor: float = LOG_CLAMP) -> Tensor:
    """Natural log with inputs clamped to ``>= floor``; clamped slots get no gradient."""
    v = x.values
    clamped = np.maximum(v, floor)
    live = v >= floor
    return make_result("log", np.log(clamped), (x,), lambda g: (np.where(live, g / clamped, 0.0),))


def activation(x: Tensor, kind: str) -> Tensor:
    table = {
        "sigmoid": sigmoid,
        "tanh": tanh,
        "relu": relu,
        "softmax_lastdim": softmax,
        "softmax": softmax,
        "log": log,
    }
    try:
        fn = table[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def _norm_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def reduce(x: Tensor, kind: str = "sum", axis: int | None = None) -> Tensor:
    """Sum or mean over ``axis`` (or every element when ``axis`` is None)."""
    if kind not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {kind!r}")
    shape = x.shape
    if axis is None:
        n = x.size
        total = x.values.sum()
        out = total / n if kind == "mean" else total
        factor = 1.0 / n if kind == "mean" else 1.0
        return make_result(kind, np.asarray(out), (x,), lambda g: (np.full(shape, float(g) * factor),))
    ax = _norm_axis(axis, x.ndim)
    n = shape[ax]
    out = x.values.sum(axis=ax)
    factor = 1.0
    if kind == "mean":
        out = out / n
        factor = 1.0 / n

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, ax), shape) * factor,)

    return make_result(kind, out, (x,), back)


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "sum", axis)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "mean", axis)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: {x.shape} -> {shape}")
    old = x.shape
    return make_result("reshape", x.values.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise DimensionError("transpose needs rank >= 2")
    return make_result(
        "transpose", np.swapaxes(x.values, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),)
    )


def gather_rows(table: Tensor, index) -> Tensor:
    """Rows of a 2-D ``table`` picked by an integer index array of any shape."""
    idx = np.asarray(index, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError("gather_rows needs a 2-D table")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {table.shape[0]} rows")
    rows = table.shape

    def back(g):
        acc = np.zeros(rows)
        np.add.at(acc, idx.reshape(-1), g.reshape(-1, rows[1]))
        return (acc,)

    return make_result("gather", table.values[idx], (table,), back)


def select(x: Tensor, index, axis: int = -1) -> Tensor:
    """Pick entries along ``axis`` with an integer index (scalar drops the axis)."""
    ax = _norm_axis(axis, x.ndim)
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def back(g):
        acc = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        if idx.ndim == 0:
            sl[ax] = int(idx)
            acc[tuple(sl)] = g
        else:
            moved = np.moveaxis(acc, ax, 0)
            np.add.at(moved, idx, np.moveaxis(g, ax, 0))
        return (acc,)

    return make_result("select", np.take(x.values, idx, axis=ax), (x,), back)


def repeat_rows(x: Tensor, n: int) -> Tensor:
    """Repeat every entry along axis 0 ``n`` times (``[a, b] -> [a, a, b, b]``)."""
    n = int(n)
    shape = x.shape

    def back(g):
        return (g.reshape((shape[0], n) + shape[1:]).sum(axis=1),)

    return make_result("repeat_rows", np.repeat(x.values, n, axis=0), (x,), back)


def tile(x: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of ``x`` along a new leading axis."""
    n = int(n)
    out = np.broadcast_to(x.values, (n,) + x.shape).copy()
    return make_result("tile", out, (x,), lambda g: (g.sum(axis=0),))


def stack(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    if not xs:
        raise DimensionError("stack of nothing")
    for t in xs[1:]:
        _same_shape(xs[0], t, "stack")
    ax = _norm_axis(axis, xs[0].ndim + 1)
    out = np.stack([t.values for t in xs], axis=ax)

    def back(g):
        return [np.take(g, i, axis=ax) for i in range(len(xs))]

    return make_result("stack", out, tuple(xs), back)


def detach(x: Tensor) -> Tensor:
    return x.detach()


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x[B, n] + b[n]`` with the row expansion made explicit."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: {x.shape} + {b.shape}")
    return add(x, repeat_rows(reshape(b, (1, b.shape[0])), x.shape[0]))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add_bias(out, b)
