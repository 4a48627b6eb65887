"""Token-type-routed dual-stream transformer.

Every token carries a type: text and clean-image tokens are processed by the
understanding stream, noise-conditioned image tokens by the generation
stream. The two streams are fully decoupled parameter sets (projections,
norm gains, feedforwards) selected per token at every layer, while a single
shared masked attention lets all tokens interact. Two heads read the final
states: a linear text head over the vocabulary, and the patch decoder
producing raw pixel predictions for noise tokens.

This module also owns sequence assembly: captions, clean context images
(delimited by learned <img>/</img> boundary embeddings, which behave as
causal text-kind tokens), and noise blocks with their time/noise-scale
conditioning added once at the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .attention import (
    KIND_CLEAN_IMAGE,
    KIND_NOISE_IMAGE,
    KIND_TEXT,
    CleanImage,
    NoiseImage,
    Text,
    attend_reference,
    build_mask,
)
from .codec import PATCH, PatchGrid, codec_from_arrays, decode_patches, encode_image, init_codec_arrays
from .rng import RandomStream
from .rope import RopeConfig, apply_rope_many, assign_positions

__all__ = [
    "STREAM_UND", "STREAM_GEN", "route",
    "ModelConfig", "ModelParams", "init_params",
    "CondEmbedParams", "timestep_embed", "ns_embed", "conditioning_embed",
    "TextTokens", "Marker", "CleanImageBlock", "NoiseImageBlock", "TokenSequence",
    "ModelOutput", "mot_block_forward", "model_forward",
]

STREAM_UND = 0
STREAM_GEN = 1


def route(types: np.ndarray) -> np.ndarray:
    """Stream assignment per token: noise tokens to generation, rest to understanding."""
    types = np.asarray(types, dtype=np.int64)
    return np.where(types == KIND_NOISE_IMAGE, STREAM_GEN, STREAM_UND)


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = 64
    width: int = 64
    layers: int = 2
    q_heads: int = 4
    kv_heads: int = 1
    rope: RopeConfig = field(default_factory=RopeConfig)
    cond_freq_dim: int = 32
    ffn_mult: int = 4

    def __post_init__(self):
        if self.q_heads % self.kv_heads:
            raise ValueError(
                f"q_heads ({self.q_heads}) must be a multiple of kv_heads ({self.kv_heads})"
            )
        if self.cond_freq_dim % 2:
            raise ValueError(f"cond_freq_dim must be even, got {self.cond_freq_dim}")
        if self.width % 4:
            raise ValueError(f"width must be divisible by 4, got {self.width}")

    @property
    def head_size(self) -> int:
        return self.rope.head_size

    @property
    def q_width(self) -> int:
        return self.q_heads * self.head_size

    @property
    def kv_width(self) -> int:
        return self.kv_heads * self.head_size


_STREAM_NAMES = {STREAM_UND: "und", STREAM_GEN: "gen"}


def _stream_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    w, f = cfg.width, cfg.ffn_mult * cfg.width
    return {
        "attn_norm": (w,),
        "wq": (w, cfg.q_width),
        "wk": (w, cfg.kv_width),
        "wv": (w, cfg.kv_width),
        "wo": (cfg.q_width, w),
        "ffn_norm": (w,),
        "ffn.w1": (w, f),
        "ffn.w2": (f, w),
    }


def init_params(cfg: ModelConfig, rng: RandomStream) -> dict[str, np.ndarray]:
    """Fresh parameter arrays, keyed by dotted names; deterministic in rng."""
    arrays: dict[str, np.ndarray] = {}

    def normal(name: str, shape: tuple, std: float) -> None:
        draw, _ = rng.split(name).normal(shape)
        arrays[name] = draw * std

    normal("embed.tokens", (cfg.vocab, cfg.width), cfg.width ** -0.5)
    arrays.update(init_codec_arrays(cfg.width, rng.split("codec")))
    for layer in range(cfg.layers):
        for stream in ("und", "gen"):
            base = f"blocks.{layer}.{stream}."
            for suffix, shape in _stream_shapes(cfg).items():
                if suffix.endswith("norm"):
                    arrays[base + suffix] = np.ones(shape)
                else:
                    normal(base + suffix, shape, shape[0] ** -0.5)
    arrays["final_norm.und"] = np.ones(cfg.width)
    arrays["final_norm.gen"] = np.ones(cfg.width)
    normal("head.text", (cfg.width, cfg.vocab), cfg.width ** -0.5)
    for kind in ("time", "scale"):
        normal(f"cond.{kind}.w1", (cfg.cond_freq_dim, cfg.width), cfg.cond_freq_dim ** -0.5)
        arrays[f"cond.{kind}.b1"] = np.zeros(cfg.width)
        normal(f"cond.{kind}.w2", (cfg.width, cfg.width), cfg.width ** -0.5)
        arrays[f"cond.{kind}.b2"] = np.zeros(cfg.width)
    return arrays


@dataclass
class ModelParams:
    """A model configuration plus its named parameter arrays.

    Array values may be plain ndarrays (inference) or autodiff Vars
    (training); all forward code is agnostic.
    """

    config: ModelConfig
    arrays: dict

    @classmethod
    def init(cls, cfg: ModelConfig, rng: RandomStream) -> "ModelParams":
        return cls(config=cfg, arrays=init_params(cfg, rng))

    def lifted(self) -> "ModelParams":
        """A view with every array wrapped as a gradient-tracking Var."""
        return ModelParams(self.config, {k: ad.Var(v) for k, v in self.arrays.items()})

    def values(self) -> dict[str, np.ndarray]:
        return {k: ad.value_of(v) for k, v in self.arrays.items()}


# ---------------------------------------------------------------------------
# time / noise-scale conditioning
# ---------------------------------------------------------------------------

@dataclass
class CondEmbedParams:
    w1: object
    b1: object
    w2: object
    b2: object


def _cond_params(arrays, kind: str) -> CondEmbedParams:
    return CondEmbedParams(
        w1=arrays[f"cond.{kind}.w1"], b1=arrays[f"cond.{kind}.b1"],
        w2=arrays[f"cond.{kind}.w2"], b2=arrays[f"cond.{kind}.b2"],
    )


def _sinusoidal_features(x, freq_dim: int):
    """[sin(x*w) | cos(x*w)] at geometric frequencies with base 10000."""
    half = freq_dim // 2
    freqs = 10000.0 ** (-2.0 * np.arange(half) / freq_dim)
    angles = ad.mul(x, freqs)
    return ad.concat([ad.sin(angles), ad.cos(angles)], axis=0)


def _cond_embed(x, params: CondEmbedParams, freq_dim: int):
    feats = ad.reshape(_sinusoidal_features(x, freq_dim), (1, freq_dim))
    hidden = ad.gelu(ad.add(ad.matmul(feats, params.w1), params.b1))
    return ad.reshape(ad.add(ad.matmul(hidden, params.w2), params.b2), (-1,))


def timestep_embed(t, params: CondEmbedParams, freq_dim: int = 32):
    """Embed a flow time t in [0, 1] as a width-sized vector."""
    tv = float(ad.value_of(t))
    if not 0.0 <= tv <= 1.0:
        raise ValueError(f"timestep must lie in [0, 1], got {tv}")
    return _cond_embed(t, params, freq_dim)


def ns_embed(sigma_bar, params: CondEmbedParams, freq_dim: int = 32):
    """Embed a normalized noise scale in [0, 1]; same architecture, own weights."""
    sv = float(ad.value_of(sigma_bar))
    if not 0.0 <= sv <= 1.0:
        raise ValueError(f"normalized noise scale must lie in [0, 1], got {sv}")
    return _cond_embed(sigma_bar, params, freq_dim)


def conditioning_embed(t, sigma_bar, arrays, freq_dim: int = 32):
    """Joint conditioning s = timestep embedding + noise-scale embedding."""
    tau = timestep_embed(t, _cond_params(arrays, "time"), freq_dim)
    nse = ns_embed(sigma_bar, _cond_params(arrays, "scale"), freq_dim)
    return ad.add(tau, nse)


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

@dataclass
class TextTokens:
    """Vocabulary tokens; targets[i] is the id position i must predict (-1: none)."""

    ids: np.ndarray
    targets: np.ndarray | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.targets is None:
            self.targets = np.full(len(self.ids), -1, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.targets.shape != self.ids.shape:
            raise ValueError("targets must align one-to-one with ids")

    @classmethod
    def with_next_token_targets(cls, ids) -> "TextTokens":
        ids = np.asarray(ids, dtype=np.int64)
        targets = np.concatenate([ids[1:], [-1]])
        return cls(ids=ids, targets=targets)

    @property
    def size(self) -> int:
        return len(self.ids)


@dataclass
class Marker:
    """An <img> (open) or </img> (close) boundary token; causal text-kind."""

    open: bool

    size = 1


@dataclass
class CleanImageBlock:
    image: np.ndarray

    @property
    def size(self) -> int:
        _, h, w = self.image.shape
        return (h // PATCH) * (w // PATCH)


@dataclass
class NoiseImageBlock:
    z: np.ndarray
    t: float
    sigma_bar: float
    paired: bool = False

    @property
    def size(self) -> int:
        _, h, w = self.z.shape
        return (h // PATCH) * (w // PATCH)


@dataclass
class TokenSequence:
    segments: list

    @classmethod
    def for_t2i(
        cls,
        caption_ids,
        z: np.ndarray,
        t: float,
        sigma_bar: float,
        text_present: bool = True,
        context_images: Sequence[np.ndarray] = (),
        image_context_present: bool = True,
        caption_targets: bool = True,
    ) -> "TokenSequence":
        """Assemble [caption | context images | <img> noise] per condition flags.

        Dropping the text condition removes the caption tokens; dropping the
        image context removes context patch tokens but keeps their boundary
        markers, so the unconditional branch sees the same scaffolding.
        """
        segments: list = []
        if text_present and len(caption_ids):
            seg = (TextTokens.with_next_token_targets(caption_ids)
                   if caption_targets else TextTokens(np.asarray(caption_ids)))
            segments.append(seg)
        for img in context_images:
            segments.append(Marker(open=True))
            if image_context_present:
                segments.append(CleanImageBlock(image=np.asarray(img, dtype=np.float64)))
            segments.append(Marker(open=False))
        segments.append(Marker(open=True))
        segments.append(NoiseImageBlock(z=np.asarray(z, dtype=np.float64),
                                        t=float(t), sigma_bar=float(sigma_bar)))
        return cls(segments=segments)

    def layout(self) -> list:
        out = []
        for seg in self.segments:
            if isinstance(seg, (TextTokens, Marker)):
                out.append(Text(seg.size))
            elif isinstance(seg, CleanImageBlock):
                _, h, w = seg.image.shape
                out.append(CleanImage(h // PATCH, w // PATCH))
            elif isinstance(seg, NoiseImageBlock):
                _, h, w = seg.z.shape
                out.append(NoiseImage(h // PATCH, w // PATCH, paired=seg.paired))
            else:
                raise ValueError(f"unknown segment type {type(seg).__name__}")
        return out

    @property
    def n_tokens(self) -> int:
        return sum(seg.size for seg in self.segments)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _routed(hidden, idx_groups, fn_by_stream, n: int, width: int):
    """Apply a per-stream function to that stream's rows and reassemble."""
    parts = []
    for stream, idx in idx_groups:
        if len(idx) == 0:
            continue
        parts.append((idx, fn_by_stream(stream, ad.gather_rows(hidden, idx))))
    return ad.route_merge(n, parts, width)


def mot_block_forward(hidden, types, positions, mask, arrays, layer: int, cfg: ModelConfig):
    """One block: routed pre-norm attention + routed pre-norm feedforward.

    Q/K/V and output projections come from the token's stream; rotary
    rotation is applied to Q and K; a single masked attention spans the
    whole sequence; each residual branch re-enters through its own stream.
    """
    n = ad.value_of(hidden).shape[0]
    streams = route(types)
    idx_groups = [(s, np.nonzero(streams == s)[0]) for s in (STREAM_UND, STREAM_GEN)]

    def pref(stream: int) -> str:
        return f"blocks.{layer}.{_STREAM_NAMES[stream]}."

    def qkv(stream, rows):
        normed = ad.rms_norm(rows, arrays[pref(stream) + "attn_norm"])
        return ad.concat(
            [ad.matmul(normed, arrays[pref(stream) + "wq"]),
             ad.matmul(normed, arrays[pref(stream) + "wk"]),
             ad.matmul(normed, arrays[pref(stream) + "wv"])],
            axis=1,
        )

    packed = _routed(hidden, idx_groups, qkv, n, cfg.q_width + 2 * cfg.kv_width)
    dh = cfg.head_size
    q = ad.reshape(_slice_cols(packed, 0, cfg.q_width), (n, cfg.q_heads, dh))
    k = ad.reshape(_slice_cols(packed, cfg.q_width, cfg.q_width + cfg.kv_width),
                   (n, cfg.kv_heads, dh))
    v = ad.reshape(_slice_cols(packed, cfg.q_width + cfg.kv_width,
                               cfg.q_width + 2 * cfg.kv_width), (n, cfg.kv_heads, dh))
    q = ad.transpose(q, (1, 0, 2))
    k = ad.transpose(k, (1, 0, 2))
    v = ad.transpose(v, (1, 0, 2))
    q = apply_rope_many(q, positions, cfg.rope)
    k = apply_rope_many(k, positions, cfg.rope)
    if cfg.kv_heads != cfg.q_heads:
        kv_map = np.repeat(np.arange(cfg.kv_heads), cfg.q_heads // cfg.kv_heads)
        k = ad.gather_rows(k, kv_map)
        v = ad.gather_rows(v, kv_map)
    attn = attend_reference(q, k, v, mask, dh ** -0.5)
    attn = ad.reshape(ad.transpose(attn, (1, 0, 2)), (n, cfg.q_width))

    def out_proj(stream, rows):
        return ad.matmul(rows, arrays[pref(stream) + "wo"])

    hidden = ad.add(hidden, _routed(attn, idx_groups, out_proj, n, cfg.width))

    def ffn(stream, rows):
        normed = ad.rms_norm(rows, arrays[pref(stream) + "ffn_norm"])
        inner = ad.gelu(ad.matmul(normed, arrays[pref(stream) + "ffn.w1"]))
        return ad.matmul(inner, arrays[pref(stream) + "ffn.w2"])

    return ad.add(hidden, _routed(hidden, idx_groups, ffn, n, cfg.width))


def _slice_cols(x, lo: int, hi: int):
    xv = ad.value_of(x)
    width = xv.shape[1]
    if not isinstance(x, ad.Var):
        return xv[:, lo:hi]
    out = ad.Var(xv[:, lo:hi], parents=(x,))

    def bwd(g, x=x):
        full = np.zeros((g.shape[0], width))
        full[:, lo:hi] = g
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        x.grad += full

    out._backward = bwd
    return out


@dataclass
class ModelOutput:
    text_logits: object          # (n_text_positions, vocab)
    text_positions: np.ndarray   # sequence positions of vocabulary text tokens
    text_targets: np.ndarray     # -1 where no next-token target exists
    xhat: list                   # raw (3, H, W) prediction per noise block
    noise_blocks: list           # the NoiseImageBlock segments, in order


def model_forward(seq: TokenSequence, params: ModelParams) -> ModelOutput:
    """Run the full model over one mixed sequence.

    Text embeds via the vocabulary table, clean images and noise states via
    the patch encoder; the joint time/noise-scale conditioning is added once
    to noise-token inputs. All blocks share the hybrid mask; the text head
    reads understanding states at vocabulary-token positions and the patch
    decoder reads generation states at noise positions.
    """
    cfg, arrays = params.config, params.arrays
    if not seq.segments:
        raise ValueError("sequence has no segments")
    layout = seq.layout()
    positions = assign_positions(layout)
    mask = build_mask(layout)
    codec = codec_from_arrays(arrays)

    pieces = []
    types = []
    text_positions: list[int] = []
    text_targets: list[int] = []
    noise_spans: list[tuple[int, int, NoiseImageBlock]] = []
    pos = 0
    for seg in seq.segments:
        if isinstance(seg, TextTokens):
            if np.any((seg.ids < 0) | (seg.ids >= cfg.vocab)):
                raise ValueError(f"text ids out of vocabulary range [0, {cfg.vocab})")
            pieces.append(ad.gather_rows(arrays["embed.tokens"], seg.ids))
            types.extend([KIND_TEXT] * seg.size)
            text_positions.extend(range(pos, pos + seg.size))
            text_targets.extend(seg.targets.tolist())
        elif isinstance(seg, Marker):
            name = "codec.img_open" if seg.open else "codec.img_close"
            pieces.append(ad.reshape(arrays[name], (1, cfg.width)))
            types.append(KIND_TEXT)
        elif isinstance(seg, CleanImageBlock):
            pieces.append(encode_image(seg.image, codec).embeddings)
            types.extend([KIND_CLEAN_IMAGE] * seg.size)
        elif isinstance(seg, NoiseImageBlock):
            grid = encode_image(seg.z, codec)
            cond = conditioning_embed(seg.t, seg.sigma_bar, arrays, cfg.cond_freq_dim)
            pieces.append(ad.add(grid.embeddings, ad.reshape(cond, (1, cfg.width))))
            types.extend([KIND_NOISE_IMAGE] * seg.size)
            noise_spans.append((pos, pos + seg.size, seg))
        else:
            raise ValueError(f"unknown segment type {type(seg).__name__}")
        pos += seg.size

    hidden = ad.concat(pieces, axis=0)
    types = np.asarray(types, dtype=np.int64)
    for layer in range(cfg.layers):
        hidden = mot_block_forward(hidden, types, positions, mask, arrays, layer, cfg)

    streams = route(types)
    final_groups = [(s, np.nonzero(streams == s)[0]) for s in (STREAM_UND, STREAM_GEN)]

    def final_norm(stream, rows):
        return ad.rms_norm(rows, arrays[f"final_norm.{_STREAM_NAMES[stream]}"])

    hidden = _routed(hidden, final_groups, final_norm, len(types), cfg.width)

    text_positions = np.asarray(text_positions, dtype=np.int64)
    if len(text_positions):
        logits = ad.matmul(ad.gather_rows(hidden, text_positions), arrays["head.text"])
    else:
        logits = np.zeros((0, cfg.vocab))

    xhat = []
    blocks = []
    for start, end, seg in noise_spans:
        _, h, w = seg.z.shape
        grid = PatchGrid(h // PATCH, w // PATCH,
                         ad.gather_rows(hidden, np.arange(start, end)))
        xhat.append(decode_patches(grid, codec))
        blocks.append(seg)

    return ModelOutput(
        text_logits=logits,
        text_positions=text_positions,
        text_targets=np.asarray(text_targets, dtype=np.int64),
        xhat=xhat,
        noise_blocks=blocks,
    )
