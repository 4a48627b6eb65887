"""Multi-axis rotary position embedding.

One rotary scheme spans a temporal axis and two spatial axes: the head
dimension is partitioned into three contiguous even-sized slices, each
rotated pairwise by its own position index and frequency base. Text tokens
advance along the temporal axis with zero spatial indices; all patches of an
image segment share one temporal index while their (h, w) indices enumerate
the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import KIND_CLEAN_IMAGE, NoiseImage, SegmentLayout, Text

__all__ = ["PositionTriple", "RopeConfig", "assign_positions", "rotation_angles",
           "apply_rope", "apply_rope_many"]


@dataclass(frozen=True)
class PositionTriple:
    t: int
    h: int
    w: int

    def __post_init__(self):
        if min(self.t, self.h, self.w) < 0:
            raise ValueError(f"position indices must be nonnegative, got {self}")


@dataclass(frozen=True)
class RopeConfig:
    """Head-dimension allocation and frequency bases for the three axes.

    The default preserves a 2:1:1 temporal/spatial split with the reference
    bases: temporal theta 5e6, spatial theta 1e4.
    """

    dims_t: int = 8
    dims_h: int = 4
    dims_w: int = 4
    theta_t: float = 5_000_000.0
    theta_h: float = 10_000.0
    theta_w: float = 10_000.0

    def __post_init__(self):
        for name in ("dims_t", "dims_h", "dims_w"):
            d = getattr(self, name)
            if d < 0 or d % 2:
                raise ValueError(f"{name} must be even and nonnegative, got {d}")

    @property
    def head_size(self) -> int:
        return self.dims_t + self.dims_h + self.dims_w


def assign_positions(layout: SegmentLayout) -> np.ndarray:
    """Per-token (t, h, w) triples for a segment layout.

    Text tokens take consecutive temporal steps with (h, w) = (0, 0). Every
    token of one image segment shares a single fresh temporal step while
    (h, w) enumerate its grid row-major. A noise segment marked `paired`
    reuses the most recent clean image's temporal step and grid instead of
    consuming a step, so predictions align positionally with their target.
    """
    if not layout:
        raise ValueError("layout must contain at least one segment")
    triples: list[tuple[int, int, int]] = []
    t_next = 0
    last_clean: tuple[int, int, int] | None = None  # (t, rows, cols)
    for seg in layout:
        if isinstance(seg, Text):
            for _ in range(seg.length):
                triples.append((t_next, 0, 0))
                t_next += 1
        elif isinstance(seg, NoiseImage) and seg.paired:
            if last_clean is None:
                raise ValueError("paired noise segment has no preceding clean image")
            t, rows, cols = last_clean
            if (rows, cols) != (seg.rows, seg.cols):
                raise ValueError(
                    f"paired noise grid {seg.rows}x{seg.cols} does not match "
                    f"target image grid {rows}x{cols}"
                )
            for r in range(seg.rows):
                for c in range(seg.cols):
                    triples.append((t, r, c))
        else:
            t = t_next
            t_next += 1
            for r in range(seg.rows):
                for c in range(seg.cols):
                    triples.append((t, r, c))
            if seg.kind == KIND_CLEAN_IMAGE:
                last_clean = (t, seg.rows, seg.cols)
    return np.asarray(triples, dtype=np.int64)


def _axis_freqs(dims: int, theta: float) -> np.ndarray:
    i = np.arange(dims // 2, dtype=np.float64)
    return theta ** (-2.0 * i / dims) if dims else np.empty(0)


def rotation_angles(positions: np.ndarray, cfg: RopeConfig) -> np.ndarray:
    """(n, head_size/2) rotation angles: T-slice pairs, then H, then W."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    parts = [
        positions[:, 0:1] * _axis_freqs(cfg.dims_t, cfg.theta_t)[None, :],
        positions[:, 1:2] * _axis_freqs(cfg.dims_h, cfg.theta_h)[None, :],
        positions[:, 2:3] * _axis_freqs(cfg.dims_w, cfg.theta_w)[None, :],
    ]
    return np.concatenate(parts, axis=1)


def apply_rope(vec, pos: PositionTriple, cfg: RopeConfig):
    """Rotate one head vector by its position triple (norm-preserving)."""
    v = ad.value_of(vec)
    if v.shape != (cfg.head_size,):
        raise ValueError(f"head vector length {v.shape} does not match head size {cfg.head_size}")
    angles = rotation_angles(np.array([[pos.t, pos.h, pos.w]]), cfg)[0]
    return ad.rotate_pairs(vec, np.cos(angles), np.sin(angles))


def apply_rope_many(x, positions: np.ndarray, cfg: RopeConfig):
    """Rotate (..., n, head_size) vectors by per-token positions (n, 3)."""
    v = ad.value_of(x)
    if v.shape[-1] != cfg.head_size:
        raise ValueError(f"last extent {v.shape[-1]} does not match head size {cfg.head_size}")
    angles = rotation_angles(positions, cfg)
    return ad.rotate_pairs(x, np.cos(angles), np.sin(angles))
