"""Deterministic synthetic caption/image pairs.

Each sample is a solid-color shape (square, circle, or bar) at one of nine
named grid positions on a neutral gray background; the caption is
[<bos> color shape position <eos>] over a tiny closed vocabulary. The whole
dataset is a pure function of its spec, so a byte digest of it can be frozen
in tests, and captions can be checked against images by probing the pixel at
the named position.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .rng import RandomStream

__all__ = ["SyntheticSpec", "make_dataset", "render_sample", "pixel_probe",
           "dataset_digest", "BACKGROUND"]

BACKGROUND = 0.25  # neutral gray, [-1, 1] units

DEFAULT_COLORS = {
    "red": (1.0, -1.0, -1.0),
    "green": (-1.0, 1.0, -1.0),
    "blue": (-1.0, -1.0, 1.0),
    "yellow": (1.0, 1.0, -1.0),
    "cyan": (-1.0, 1.0, 1.0),
    "magenta": (1.0, -1.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (-1.0, -1.0, -1.0),
}
DEFAULT_SHAPES = ("square", "circle", "bar")
DEFAULT_POSITIONS = (
    "top-left", "top", "top-right",
    "left", "center", "right",
    "bottom-left", "bottom", "bottom-right",
)
STRUCTURAL = ("<bos>", "<eos>")


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    image_size: int = 64
    count: int = 256
    colors: tuple = tuple(DEFAULT_COLORS)
    shapes: tuple = DEFAULT_SHAPES
    positions: tuple = DEFAULT_POSITIONS

    def __post_init__(self):
        if self.image_size % 32:
            raise ValueError(f"image size must be a multiple of 32, got {self.image_size}")
        if self.count < 1:
            raise ValueError(f"sample count must be positive, got {self.count}")

    @property
    def vocab(self) -> tuple[str, ...]:
        return STRUCTURAL + self.colors + self.shapes + self.positions

    def word_id(self, word: str) -> int:
        try:
            return self.vocab.index(word)
        except ValueError:
            raise ValueError(f"word {word!r} is not in the dataset vocabulary") from None

    def describe(self) -> str:
        return (
            f"synthetic dataset: {self.count} samples at {self.image_size}px; vocab "
            f"{len(self.vocab)} = {len(STRUCTURAL)} structural + {len(self.colors)} colors "
            f"+ {len(self.shapes)} shapes + {len(self.positions)} positions"
        )


def _anchor(position: str, size: int) -> tuple[int, int]:
    """Pixel center (y, x) of a named 3x3 grid cell."""
    row = {"top": 0, "center": 1, "bottom": 2, "left": 1, "right": 1}
    col = {"left": 0, "center": 1, "right": 2, "top": 1, "bottom": 1}
    parts = position.split("-")
    r = next(row[p] for p in parts if p in row)
    c = next(col[p] for p in parts if p in col)
    centers = (size // 6, size // 2, size - size // 6)
    return centers[r], centers[c]


def render_sample(color: str, shape: str, position: str, size: int) -> np.ndarray:
    """Draw one (3, size, size) image; the anchor pixel always carries the color."""
    img = np.full((3, size, size), BACKGROUND)
    cy, cx = _anchor(position, size)
    rgb = np.array(DEFAULT_COLORS[color])[:, None]
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "square":
        r = size // 8
        inside = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r)
    elif shape == "circle":
        r = size // 8
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
    elif shape == "bar":
        inside = (np.abs(yy - cy) < size // 16) & (np.abs(xx - cx) < size // 4)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    img[:, inside] = rgb
    return img


def make_dataset(spec: SyntheticSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Generate [(caption ids, image), ...]; bit-identical for equal specs."""
    root = RandomStream.from_seed(spec.seed).split("synthetic-dataset")
    samples = []
    for i in range(spec.count):
        s = root.split(f"sample.{i}")
        ci, s = s.integers(0, len(spec.colors))
        si, s = s.integers(0, len(spec.shapes))
        pi, s = s.integers(0, len(spec.positions))
        color, shape, position = spec.colors[int(ci)], spec.shapes[int(si)], spec.positions[int(pi)]
        ids = np.array([spec.word_id(w) for w in
                        ("<bos>", color, shape, position, "<eos>")], dtype=np.int64)
        samples.append((ids, render_sample(color, shape, position, spec.image_size)))
    return samples


def pixel_probe(caption_ids: np.ndarray, image: np.ndarray, spec: SyntheticSpec) -> bool:
    """Rule-based check: the pixel at the named position carries the named color."""
    words = [spec.vocab[int(i)] for i in caption_ids]
    color = next(w for w in words if w in spec.colors)
    position = next(w for w in words if w in spec.positions)
    cy, cx = _anchor(position, image.shape[1])
    return bool(np.allclose(image[:, cy, cx], DEFAULT_COLORS[color]))


def dataset_digest(samples) -> str:
    """SHA-256 of the concatenated caption/image byte stream."""
    h = hashlib.sha256()
    for ids, img in samples:
        h.update(np.ascontiguousarray(ids, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(img, dtype="<f8").tobytes())
    return h.hexdigest()
