"""Central-difference gradient checking.

The one oracle every differentiable path in the package must answer to:
perturb a parameter coordinate by +/-h, difference the losses, and compare
against the analytic gradient the caller supplies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["GradCheckReport", "NonFiniteLossError", "grad_check"]


class NonFiniteLossError(ValueError):
    """Loss became non-finite while probing; carries the coordinate index."""

    def __init__(self, index: int | None, value: float):
        self.index = index
        where = "at base point" if index is None else f"at coordinate {index}"
        super().__init__(f"non-finite loss {value!r} encountered {where}")


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    worst_index: int
    n_checked: int
    analytic_at_worst: float
    numeric_at_worst: float

    def __str__(self):
        return (
            f"grad_check: max rel err {self.max_rel_err:.3e} at coord "
            f"{self.worst_index} (analytic {self.analytic_at_worst:.6e}, "
            f"central-diff {self.numeric_at_worst:.6e}, {self.n_checked} checked)"
        )


def grad_check(
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    step: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> GradCheckReport:
    """Compare an analytic gradient against central differences.

    `loss_fn(p)` must return (loss, gradient) and be deterministic. Each
    checked coordinate i is probed at p[i] +/- step and the relative error
    |g - g_fd| / max(|g|, |g_fd|, 1e-8) recorded. `indices` restricts the
    probe to a subset of coordinates (the comparison itself is unchanged);
    by default every coordinate is checked.
    """
    p = np.asarray(params, dtype=np.float64).ravel().copy()
    loss0, grad = loss_fn(p)
    if not np.isfinite(loss0):
        raise NonFiniteLossError(None, float(loss0))
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.shape != p.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match params {p.shape}")

    if indices is None:
        indices = range(p.size)

    worst = (-1.0, -1, 0.0, 0.0)
    n = 0
    for i in indices:
        i = int(i)
        orig = p[i]
        p[i] = orig + step
        lp, _ = loss_fn(p)
        p[i] = orig - step
        lm, _ = loss_fn(p)
        p[i] = orig
        if not np.isfinite(lp) or not np.isfinite(lm):
            raise NonFiniteLossError(i, float(lp if not np.isfinite(lp) else lm))
        g_fd = (lp - lm) / (2.0 * step)
        g = grad[i]
        rel = abs(g - g_fd) / max(abs(g), abs(g_fd), 1e-8)
        n += 1
        if rel > worst[0]:
            worst = (rel, i, g, g_fd)
    if n == 0:
        raise ValueError("grad_check was given an empty index set")
    return GradCheckReport(
        max_rel_err=max(worst[0], 0.0),
        worst_index=worst[1],
        n_checked=n,
        analytic_at_worst=worst[2],
        numeric_at_worst=worst[3],
    )
