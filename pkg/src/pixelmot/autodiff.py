"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: `Var` wraps a float64 ndarray and remembers how it was made.
Every op below accepts a mix of Vars and plain arrays. If no argument is a
Var the op returns a plain ndarray (the zero-overhead inference path);
otherwise it returns a Var wired into the graph. `backward(root)` then
accumulates gradients into every reachable Var.

The op set is exactly what the model needs: elementwise arithmetic with
broadcasting, matmul (batched, with broadcast batch dims), reductions,
shape moves, row gather/scatter for token-type routing, the pairwise
rotation used by the rotary embedding, and the fused nonlinearities whose
hand-written backward rules keep the tape short.
"""

from __future__ import annotations

import numpy as np

from . import ops

__all__ = [
    "Var", "value_of", "backward",
    "add", "sub", "mul", "neg", "scale", "matmul",
    "vsum", "vmean", "reshape", "transpose", "concat",
    "gather_rows", "route_merge", "take_index_last",
    "gelu", "rms_norm", "softmax_last", "log_softmax_last",
    "masked_fill", "rotate_pairs", "sin", "cos", "square",
]


class Var:
    """A node in the gradient tape: a value plus a backward rule."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def value_of(x) -> np.ndarray:
    """The ndarray behind `x`, whether Var or array-like."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _any_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _accum(var, g):
    # First contribution copies (g may alias a consumer's buffer); later
    # contributions accumulate in place.
    if var.grad is None:
        var.grad = np.array(g, dtype=np.float64)
        if var.grad.shape != var.value.shape:
            var.grad = np.broadcast_to(var.grad, var.value.shape).copy()
    else:
        var.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient `g` back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    # Sum away leading dims numpy prepended.
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    # Sum over dims that were broadcast from extent 1.
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(root: Var) -> None:
    """Accumulate d(root)/d(node) into .grad for every node feeding root."""
    if root.value.shape != ():
        raise ValueError(f"backward requires a scalar root, got shape {root.value.shape}")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    if not _any_var(a, b):
        return value_of(a) + value_of(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av + bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def bwd(g):
        if isinstance(a, Var):
            _accum(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _accum(b, _unbroadcast(g, bv.shape))

    out._backward = bwd
    return out


def sub(a, b):
    if not _any_var(a, b):
        return value_of(a) - value_of(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av - bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def bwd(g):
        if isinstance(a, Var):
            _accum(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _accum(b, _unbroadcast(-g, bv.shape))

    out._backward = bwd
    return out


def mul(a, b):
    if not _any_var(a, b):
        return value_of(a) * value_of(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av * bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def bwd(g):
        if isinstance(a, Var):
            _accum(a, _unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            _accum(b, _unbroadcast(g * av, bv.shape))

    out._backward = bwd
    return out


def neg(a):
    return scale(a, -1.0)


def scale(a, c: float):
    """Multiply by a python scalar constant (no gradient through c)."""
    if not isinstance(a, Var):
        return value_of(a) * c
    out = Var(a.value * c, parents=(a,))
    out._backward = lambda g: _accum(a, g * c)
    return out


def square(a):
    return mul(a, a)


# ---------------------------------------------------------------------------
# matmul and reductions
# ---------------------------------------------------------------------------

def matmul(a, b):
    if not _any_var(a, b):
        return ops.matmul(value_of(a), value_of(b))
    av, bv = value_of(a), value_of(b)
    out = Var(ops.matmul(av, bv), parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def bwd(g):
        if isinstance(a, Var):
            ga = g @ np.swapaxes(bv, -1, -2)
            _accum(a, _unbroadcast(ga, av.shape))
        if isinstance(b, Var):
            gb = np.swapaxes(av, -1, -2) @ g
            _accum(b, _unbroadcast(gb, bv.shape))

    out._backward = bwd
    return out


def vsum(a, axis=None, keepdims=False):
    if not isinstance(a, Var):
        return np.sum(value_of(a), axis=axis, keepdims=keepdims)
    out = Var(np.sum(a.value, axis=axis, keepdims=keepdims), parents=(a,))

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.value.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.value.shape).copy())

    out._backward = bwd
    return out


def vmean(a, axis=None, keepdims=False):
    av = value_of(a)
    n = av.size if axis is None else av.shape[axis]
    return scale(vsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# shape moves
# ---------------------------------------------------------------------------

def reshape(a, shape):
    if not isinstance(a, Var):
        return value_of(a).reshape(shape)
    old = a.value.shape
    out = Var(a.value.reshape(shape), parents=(a,))
    out._backward = lambda g: _accum(a, g.reshape(old))
    return out


def transpose(a, axes):
    if not isinstance(a, Var):
        return np.transpose(value_of(a), axes)
    inv = tuple(np.argsort(axes))
    out = Var(np.transpose(a.value, axes), parents=(a,))
    out._backward = lambda g: _accum(a, np.transpose(g, inv))
    return out


def concat(items, axis=0):
    values = [value_of(x) for x in items]
    if not _any_var(*items):
        return np.concatenate(values, axis=axis)
    out = Var(np.concatenate(values, axis=axis),
              parents=tuple(x for x in items if isinstance(x, Var)))
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for x, lo, hi in zip(items, offsets[:-1], offsets[1:]):
            if isinstance(x, Var):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(x, g[tuple(idx)])

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# indexed access (embedding lookup, token routing, loss targets)
# ---------------------------------------------------------------------------

def gather_rows(a, idx):
    """Select sub-arrays along axis 0: out = a[idx]. Repeats allowed."""
    idx = np.asarray(idx, dtype=np.int64)
    if not isinstance(a, Var):
        return value_of(a)[idx]
    out = Var(a.value[idx], parents=(a,))

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        np.add.at(a.grad, idx, g)

    out._backward = bwd
    return out


def route_merge(n: int, parts: list[tuple[np.ndarray, object]], width: int):
    """Assemble an (n, width) output from disjoint row groups.

    Each (idx, rows) pair places `rows` at positions `idx`; the index sets
    must partition [0, n). Rows written by one group are exactly the values
    computed by that group's branch, so an untouched branch can never
    perturb another branch's rows (bitwise).
    """
    taken = np.concatenate([np.asarray(i, dtype=np.int64) for i, _ in parts]) if parts else np.empty(0, np.int64)
    if len(np.unique(taken)) != n or (len(taken) and (taken.min() < 0 or taken.max() >= n)):
        raise ValueError("route_merge index groups must partition the row range")
    merged = np.empty((n, width), dtype=np.float64)
    for idx, rows in parts:
        merged[np.asarray(idx, dtype=np.int64)] = value_of(rows)
    if not _any_var(*(rows for _, rows in parts)):
        return merged
    out = Var(merged, parents=tuple(r for _, r in parts if isinstance(r, Var)))

    def bwd(g):
        for idx, rows in parts:
            if isinstance(rows, Var):
                _accum(rows, g[np.asarray(idx, dtype=np.int64)])

    out._backward = bwd
    return out


def take_index_last(a, idx):
    """out[i] = a[i, idx[i]] for 2-d a; used to pick target log-probs."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(len(idx))
    if not isinstance(a, Var):
        return value_of(a)[rows, idx]
    out = Var(a.value[rows, idx], parents=(a,))

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        np.add.at(a.grad, (rows, idx), g)

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------

def gelu(a):
    if not isinstance(a, Var):
        return ops.gelu(value_of(a))
    out = Var(ops.gelu(a.value), parents=(a,))
    out._backward = lambda g: _accum(a, g * ops.gelu_grad(a.value))
    return out


def rms_norm(a, gain, eps: float = 1e-6):
    """Row-wise RMS normalization with learned gain (both differentiable)."""
    av, gv = value_of(a), value_of(gain)
    if gv.shape != (av.shape[-1],):
        raise ValueError(f"rms_norm gain shape {gv.shape} vs last extent {av.shape[-1]}")
    if not _any_var(a, gain):
        return ops.rms_norm(av, gv, eps)
    d = av.shape[-1]
    s = (np.mean(av * av, axis=-1, keepdims=True) + eps) ** -0.5
    normed = av * s
    out = Var(normed * gv, parents=tuple(x for x in (a, gain) if isinstance(x, Var)))

    def bwd(g):
        if isinstance(gain, Var):
            _accum(gain, np.sum(g * normed, axis=tuple(range(av.ndim - 1))))
        if isinstance(a, Var):
            gg = g * gv
            inner = np.sum(gg * av, axis=-1, keepdims=True)
            _accum(a, s * gg - (s ** 3) * av * inner / d)

    out._backward = bwd
    return out


def softmax_last(a):
    if not isinstance(a, Var):
        return ops.softmax_last(value_of(a))
    y = ops.softmax_last(a.value)
    out = Var(y, parents=(a,))

    def bwd(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        _accum(a, y * (g - dot))

    out._backward = bwd
    return out


def log_softmax_last(a):
    av = value_of(a)
    m = np.max(av, axis=-1, keepdims=True)
    lse = m + np.log(np.sum(np.exp(av - m), axis=-1, keepdims=True))
    if not isinstance(a, Var):
        return av - lse
    y = av - lse
    p = np.exp(y)
    out = Var(y, parents=(a,))

    def bwd(g):
        _accum(a, g - p * np.sum(g, axis=-1, keepdims=True))

    out._backward = bwd
    return out


_MASK_FILL = -1e30  # exp(fill - rowmax) underflows to exactly 0.0


def masked_fill(a, allow: np.ndarray, fill: float = _MASK_FILL):
    """Where `allow` is False, replace entries with a constant (no grad there)."""
    allow = np.asarray(allow, dtype=bool)
    if not isinstance(a, Var):
        return np.where(allow, value_of(a), fill)
    out = Var(np.where(allow, a.value, fill), parents=(a,))
    out._backward = lambda g: _accum(a, np.where(allow, g, 0.0))
    return out


def rotate_pairs(a, cos_t: np.ndarray, sin_t: np.ndarray):
    """Rotate consecutive (even, odd) pairs of the last axis by given angles.

    cos_t/sin_t have half the last extent of `a` and broadcast over leading
    axes. The backward rule is rotation by the transposed (negated) angles,
    so norms are preserved in both directions.
    """
    av = value_of(a)
    even, odd = av[..., 0::2], av[..., 1::2]
    rot = np.empty_like(av)
    rot[..., 0::2] = even * cos_t - odd * sin_t
    rot[..., 1::2] = even * sin_t + odd * cos_t
    if not isinstance(a, Var):
        return rot
    out = Var(rot, parents=(a,))

    def bwd(g):
        ge, go = g[..., 0::2], g[..., 1::2]
        ga = np.empty_like(av)
        ga[..., 0::2] = ge * cos_t + go * sin_t
        ga[..., 1::2] = -ge * sin_t + go * cos_t
        _accum(a, ga)

    out._backward = bwd
    return out


def sin(a):
    if not isinstance(a, Var):
        return np.sin(value_of(a))
    out = Var(np.sin(a.value), parents=(a,))
    out._backward = lambda g: _accum(a, g * np.cos(a.value))
    return out


def cos(a):
    if not isinstance(a, Var):
        return np.cos(value_of(a))
    out = Var(np.cos(a.value), parents=(a,))
    out._backward = lambda g: _accum(a, g * -np.sin(a.value))
    return out
