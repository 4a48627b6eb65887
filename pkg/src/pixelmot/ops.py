"""Dense float64 array primitives.

Plain numpy forward implementations with input validation. The training
graph in `autodiff` reuses these formulas and adds the backward rules; these
functions are also the public, array-in/array-out surface for callers that
do not need gradients.

All public operations are deterministic and keep values finite; a Tensor
here is simply a float64 ndarray (row-major, shape + data).
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = ["matmul", "gelu", "gelu_grad", "softmax_last", "rms_norm"]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    """Dense product a @ b with an explicit dimension report on mismatch."""
    a, b = _as_f64(a), _as_f64(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ValueError(f"matmul needs at least 1-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else -1]:
        raise ValueError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape} "
            f"({a.shape[-1]} vs {b.shape[-2 if b.ndim > 1 else -1]})"
        )
    return a @ b


def gelu(x) -> np.ndarray:
    """Exact GELU x * Phi(x), with Phi the standard-normal CDF (erf form)."""
    x = _as_f64(x)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x) -> np.ndarray:
    """d/dx of exact GELU: Phi(x) + x * phi(x)."""
    x = _as_f64(x)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return cdf + x * pdf


def softmax_last(x) -> np.ndarray:
    """Softmax over the last axis; max-subtraction guards overflow."""
    x = _as_f64(x)
    if x.shape[-1] < 1:
        raise ValueError("softmax_last requires last extent >= 1")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def rms_norm(x, gain, eps: float = 0.0) -> np.ndarray:
    """Scale each row (last axis) to unit root-mean-square, then apply gain."""
    x, gain = _as_f64(x), _as_f64(gain)
    if gain.shape != (x.shape[-1],):
        raise ValueError(
            f"rms_norm gain shape {gain.shape} does not match last extent {x.shape[-1]}"
        )
    ms = np.mean(x * x, axis=-1, keepdims=True)
    return x * ((ms + eps) ** -0.5) * gain
