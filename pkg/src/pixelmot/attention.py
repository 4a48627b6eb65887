"""Hybrid attention: masks, the dense reference, and the M-block fast path.

One sequence mixes three token kinds. Text attends causally; image tokens
attend bidirectionally within their own block and causally to everything
before it; noise tokens see prior clean context plus their own block; and no
clean token ever sees a noise token.

For serving-time prefill (clean layouts only) the same semantics compress to
one key-range *interval* per row, which lets a kernel decide masking per
M-block of query rows: blocks without image tokens keep the plain causal key
range (the fast path), blocks with image tokens fetch keys out to the image
span end and rely on the per-row mask inside the block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "Text", "CleanImage", "NoiseImage", "SegmentLayout",
    "layout_token_count", "token_kinds", "segment_bounds",
    "build_mask", "row_cutoffs",
    "MBlock", "BlockPlan", "build_block_plan",
    "attend_reference", "attend_blocked", "BlockedStats",
    "KIND_TEXT", "KIND_CLEAN_IMAGE", "KIND_NOISE_IMAGE",
]

KIND_TEXT = 0
KIND_CLEAN_IMAGE = 1
KIND_NOISE_IMAGE = 2


@dataclass(frozen=True)
class Text:
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"text segment length must be positive, got {self.length}")

    @property
    def size(self) -> int:
        return self.length

    kind = KIND_TEXT


@dataclass(frozen=True)
class CleanImage:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"image grid must be positive, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    kind = KIND_CLEAN_IMAGE


@dataclass(frozen=True)
class NoiseImage:
    rows: int
    cols: int
    paired: bool = False  # reuse the preceding clean image's position grid

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"image grid must be positive, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    kind = KIND_NOISE_IMAGE


SegmentLayout = list  # list of Text | CleanImage | NoiseImage


def layout_token_count(layout: SegmentLayout) -> int:
    return sum(seg.size for seg in layout)


def token_kinds(layout: SegmentLayout) -> np.ndarray:
    """Per-token kind codes, concatenated over segments."""
    if not layout:
        raise ValueError("layout must contain at least one segment")
    return np.concatenate([np.full(seg.size, seg.kind, dtype=np.int64) for seg in layout])


def segment_bounds(layout: SegmentLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-token [start, end) bounds of the owning segment."""
    starts, ends, pos = [], [], 0
    for seg in layout:
        starts.extend([pos] * seg.size)
        ends.extend([pos + seg.size] * seg.size)
        pos += seg.size
    return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)


def build_mask(layout: SegmentLayout) -> np.ndarray:
    """(n, n) boolean allow-matrix (query row, key column)."""
    kinds = token_kinds(layout)
    starts, ends = segment_bounds(layout)
    n = len(kinds)
    cols = np.arange(n)
    not_noise_col = kinds != KIND_NOISE_IMAGE
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        if kinds[i] == KIND_TEXT:
            mask[i] = (cols <= i) & not_noise_col
        else:
            # Image rows (clean or noise): everything clean before the block,
            # plus the whole own block bidirectionally.
            own = (cols >= starts[i]) & (cols < ends[i])
            mask[i] = ((cols < starts[i]) & not_noise_col) | own
    return mask


def row_cutoffs(layout: SegmentLayout) -> np.ndarray:
    """Per-row key-range ends for clean layouts (mask[i, j] == j < cutoff[i])."""
    kinds = token_kinds(layout)
    if np.any(kinds == KIND_NOISE_IMAGE):
        raise ValueError("row cutoffs are defined for clean (noise-free) layouts only")
    _, ends = segment_bounds(layout)
    rows = np.arange(len(kinds))
    return np.where(kinds == KIND_TEXT, rows + 1, ends)


@dataclass(frozen=True)
class MBlock:
    start: int
    end: int        # one past last query row
    key_end: int
    extended: bool  # False: causal fast path


@dataclass(frozen=True)
class BlockPlan:
    block_size: int
    image_token_end: int
    n_tokens: int
    blocks: tuple[MBlock, ...] = field(default_factory=tuple)


def build_block_plan(layout: SegmentLayout, block_size: int = 4) -> BlockPlan:
    """Compile per-M-block key ranges for a clean prefill layout.

    A block with no image token keeps its causal key range. A block holding
    any image token fetches keys out to the image-span end (never less than
    its own causal range, so trailing text rows inside the block stay
    covered); per-row masking inside the block restores exact semantics.
    """
    if block_size < 1:
        raise ValueError(f"block size must be positive, got {block_size}")
    kinds = token_kinds(layout)
    if np.any(kinds == KIND_NOISE_IMAGE):
        raise ValueError("block plans cover serving-time prefill: no noise segments allowed")
    n = len(kinds)
    image_idx = np.nonzero(kinds == KIND_CLEAN_IMAGE)[0]
    image_token_end = int(image_idx[-1]) + 1 if len(image_idx) else 0
    blocks = []
    for start in range(0, n, block_size):
        end = min(start + block_size, n)
        has_image = bool(np.any(kinds[start:end] == KIND_CLEAN_IMAGE))
        if has_image:
            blocks.append(MBlock(start, end, max(end, image_token_end), True))
        else:
            blocks.append(MBlock(start, end, end, False))
    return BlockPlan(block_size=block_size, image_token_end=image_token_end,
                     n_tokens=n, blocks=tuple(blocks))


def _check_rows_allowed(mask: np.ndarray) -> None:
    row_counts = mask.sum(axis=1)
    if np.any(row_counts == 0):
        bad = int(np.nonzero(row_counts == 0)[0][0])
        raise ValueError(f"attention row {bad} has no allowed key columns")


def attend_reference(q, k, v, mask: np.ndarray, scale: float):
    """Dense masked scaled-dot-product attention (the correctness oracle).

    q, k, v: (..., n, d) arrays or autodiff Vars; mask broadcasts over the
    leading axes. Disallowed logits are treated as -inf.
    """
    mask = np.asarray(mask, dtype=bool)
    _check_rows_allowed(mask)
    kv = ad.value_of(k)
    axes = tuple(range(kv.ndim - 2)) + (kv.ndim - 1, kv.ndim - 2)
    logits = ad.scale(ad.matmul(q, ad.transpose(k, axes)), scale)
    weights = ad.softmax_last(ad.masked_fill(logits, mask))
    return ad.matmul(weights, v)


@dataclass(frozen=True)
class BlockedStats:
    skipped_key_blocks: int
    total_key_blocks: int


def attend_blocked(
    q: np.ndarray, k: np.ndarray, v: np.ndarray,
    plan: BlockPlan, cutoffs: np.ndarray,
) -> tuple[np.ndarray, BlockedStats]:
    """Execute attention under a compiled block plan.

    Numerically equivalent to `attend_reference` under the dense mask of the
    same clean layout; only keys below each block's key_end are ever fetched.
    Returns the output and the count of (M-block x key-block) tiles skipped
    relative to the full dense grid, for benchmarking.
    """
    q, k, v = (np.asarray(x, dtype=np.float64) for x in (q, k, v))
    n, d = q.shape[-2], q.shape[-1]
    if plan.n_tokens != n:
        raise ValueError(f"plan covers {plan.n_tokens} tokens, got {n} query rows")
    cutoffs = np.asarray(cutoffs, dtype=np.int64)
    if np.any(cutoffs < 1) or np.any(cutoffs > n):
        raise ValueError("row cutoffs must lie in [1, n]")
    scale = 1.0 / np.sqrt(d)
    lead = np.broadcast_shapes(q.shape[:-2], k.shape[:-2], v.shape[:-2])
    out = np.empty(lead + (n, v.shape[-1]), dtype=np.float64)
    n_key_blocks = -(-n // plan.block_size)
    skipped = 0
    for blk in plan.blocks:
        rows = slice(blk.start, blk.end)
        ke = blk.key_end
        logits = q[..., rows, :] @ np.swapaxes(k[..., :ke, :], -1, -2) * scale
        allow = np.arange(ke)[None, :] < cutoffs[rows][:, None]
        if np.any(~allow.any(axis=1)):
            bad = blk.start + int(np.nonzero(~allow.any(axis=1))[0][0])
            raise ValueError(f"attention row {bad} has no allowed key columns")
        logits = np.where(allow, logits, -1e30)
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        weights = e / e.sum(axis=-1, keepdims=True)
        out[..., rows, :] = weights @ v[..., :ke, :]
        skipped += sum(1 for kb in range(n_key_blocks) if kb * plan.block_size >= ke)
    return out, BlockedStats(skipped_key_blocks=skipped,
                             total_key_blocks=len(plan.blocks) * n_key_blocks)
