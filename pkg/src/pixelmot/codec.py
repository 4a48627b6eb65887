"""Pixel/token interface.

Images are mapped to one token per 32x32 patch by two non-overlapping
patchify convolutions (strides 16 then 2, kernel size equal to stride) with
a GELU between them, plus a fixed 2D sinusoidal positional encoding at token
granularity. Tokens are mapped back to pixels by a per-token two-layer MLP
head producing a full 32x32x3 patch.

Because kernel size equals stride, each token is a function of exactly its
own patch, and each decoded patch depends on exactly its own token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .rng import RandomStream

__all__ = [
    "PATCH", "STRIDE1", "STRIDE2",
    "PatchGrid", "CodecParams",
    "sinusoidal_pe2d", "encode_image", "decode_patches",
    "init_codec_arrays", "codec_from_arrays",
]

PATCH = 32      # pixels per token side
STRIDE1 = 16    # first conv: 3 -> dim/2 channels
STRIDE2 = 2     # second conv: dim/2 -> dim channels


@dataclass
class PatchGrid:
    """A rows x cols grid of token vectors (flattened row-major)."""

    rows: int
    cols: int
    embeddings: object  # (rows*cols, dim) ndarray or autodiff.Var

    @property
    def dim(self) -> int:
        return ad.value_of(self.embeddings).shape[-1]


@dataclass
class CodecParams:
    """Patch encoder/decoder weights plus the image boundary embeddings.

    conv weights are stored patchify-style: (flattened receptive field, out
    channels), receptive field flattened as (channel, ky, kx) for conv1 and
    (ky, kx, channel) for conv2.
    """

    conv1_w: object
    conv1_b: object
    conv2_w: object
    conv2_b: object
    dec_w1: object
    dec_b1: object
    dec_w2: object
    dec_b2: object
    img_open: object
    img_close: object

    @property
    def dim(self) -> int:
        return ad.value_of(self.conv2_w).shape[-1]


def init_codec_arrays(dim: int, rng: RandomStream) -> dict[str, np.ndarray]:
    """Fresh codec arrays for model width `dim` (dim must be even)."""
    if dim % 2:
        raise ValueError(f"codec width must be even, got {dim}")
    c1 = dim // 2
    hidden = 4 * dim
    out = 3 * PATCH * PATCH
    shapes = {
        "codec.conv1.w": (3 * STRIDE1 * STRIDE1, c1),
        "codec.conv1.b": (c1,),
        "codec.conv2.w": (STRIDE2 * STRIDE2 * c1, dim),
        "codec.conv2.b": (dim,),
        "codec.dec.w1": (dim, hidden),
        "codec.dec.b1": (hidden,),
        "codec.dec.w2": (hidden, out),
        "codec.dec.b2": (out,),
        "codec.img_open": (dim,),
        "codec.img_close": (dim,),
    }
    arrays = {}
    for name, shape in shapes.items():
        if name.endswith(".b1") or name.endswith(".b2") or name.endswith(".b"):
            arrays[name] = np.zeros(shape)
            continue
        fan_in = shape[0] if len(shape) == 2 else dim
        draw, _ = rng.split(name).normal(shape)
        arrays[name] = draw / np.sqrt(fan_in)
    return arrays


def codec_from_arrays(arrays: Mapping[str, object]) -> CodecParams:
    return CodecParams(
        conv1_w=arrays["codec.conv1.w"], conv1_b=arrays["codec.conv1.b"],
        conv2_w=arrays["codec.conv2.w"], conv2_b=arrays["codec.conv2.b"],
        dec_w1=arrays["codec.dec.w1"], dec_b1=arrays["codec.dec.b1"],
        dec_w2=arrays["codec.dec.w2"], dec_b2=arrays["codec.dec.b2"],
        img_open=arrays["codec.img_open"], img_close=arrays["codec.img_close"],
    )


def sinusoidal_pe2d(rows: int, cols: int, dim: int) -> np.ndarray:
    """Fixed 2D positional encoding, (rows*cols, dim), row-major.

    The first dim/2 channels encode the row index, the rest the column
    index; each half interleaves sin/cos at geometric frequencies with base
    10000. Every position has norm sqrt(dim/2).
    """
    if dim % 4:
        raise ValueError(f"pe2d dim must be divisible by 4, got {dim}")
    half = dim // 2

    def axis_encoding(n: int) -> np.ndarray:
        k = np.arange(half // 2, dtype=np.float64)
        freqs = 10000.0 ** (-2.0 * k / half)
        angles = np.arange(n, dtype=np.float64)[:, None] * freqs[None, :]
        enc = np.empty((n, half))
        enc[:, 0::2] = np.sin(angles)
        enc[:, 1::2] = np.cos(angles)
        return enc

    row_enc = axis_encoding(rows)          # (rows, half)
    col_enc = axis_encoding(cols)          # (cols, half)
    pe = np.empty((rows, cols, dim))
    pe[:, :, :half] = row_enc[:, None, :]
    pe[:, :, half:] = col_enc[None, :, :]
    return pe.reshape(rows * cols, dim)


def _check_image_dims(img: np.ndarray) -> tuple[int, int]:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected image shape (3, H, W), got {img.shape}")
    _, h, w = img.shape
    if h % PATCH or w % PATCH:
        raise ValueError(f"image dims must be multiples of {PATCH}, got {h}x{w}")
    return h, w


def encode_image(img: np.ndarray, params: CodecParams) -> PatchGrid:
    """Map a (3, H, W) pixel array to its (H/32)x(W/32) token grid."""
    img = np.asarray(img, dtype=np.float64)
    h, w = _check_image_dims(img)
    h1, w1 = h // STRIDE1, w // STRIDE1

    # conv1 as patchify: every 16x16 patch -> (c, ky, kx)-flattened row.
    patches = (
        img.reshape(3, h1, STRIDE1, w1, STRIDE1)
        .transpose(1, 3, 0, 2, 4)
        .reshape(h1 * w1, 3 * STRIDE1 * STRIDE1)
    )
    x1 = ad.gelu(ad.add(ad.matmul(patches, params.conv1_w), params.conv1_b))

    # conv2 as 2x2 regrouping of the intermediate (h1, w1) grid.
    c1 = ad.value_of(params.conv1_w).shape[-1]
    h2, w2 = h1 // STRIDE2, w1 // STRIDE2
    grouped = ad.reshape(x1, (h2, STRIDE2, w2, STRIDE2, c1))
    grouped = ad.transpose(grouped, (0, 2, 1, 3, 4))
    grouped = ad.reshape(grouped, (h2 * w2, STRIDE2 * STRIDE2 * c1))
    x2 = ad.add(ad.matmul(grouped, params.conv2_w), params.conv2_b)

    pe = sinusoidal_pe2d(h2, w2, params.dim)
    return PatchGrid(rows=h2, cols=w2, embeddings=ad.add(x2, pe))


def decode_patches(states: PatchGrid, params: CodecParams):
    """Map final token states back to a raw (3, rows*32, cols*32) prediction."""
    dim = ad.value_of(params.dec_w1).shape[0]
    state_dim = ad.value_of(states.embeddings).shape[-1]
    if state_dim != dim:
        raise ValueError(f"decoder expects width {dim}, got token states of width {state_dim}")
    hidden = ad.gelu(ad.add(ad.matmul(states.embeddings, params.dec_w1), params.dec_b1))
    flat = ad.add(ad.matmul(hidden, params.dec_w2), params.dec_b2)
    r, c = states.rows, states.cols
    tiles = ad.reshape(flat, (r, c, 3, PATCH, PATCH))
    tiles = ad.transpose(tiles, (2, 0, 3, 1, 4))
    return ad.reshape(tiles, (3, r * PATCH, c * PATCH))
