"""Reward arithmetic for post-training, with external judges behind a stub.

Text-rendering accuracy is a multiset IoU between extracted and reference
token counts; style judgments arrive as discrete 1-4 scores mapped linearly
onto [0, 1]; the composite text-rendering reward is r_ocr + lambda_sty *
r_sty. Resolution candidates are gated by a difficulty-vs-epoch warmup ramp
and renormalized for sampling, and the two reward groups alternate by epoch
parity. Anything that needs a real model (VLM style judge, preference
scorer) is called through the Scorer protocol; the in-repo reference stub is
deterministic from a hash of its inputs so pipelines are testable offline.
"""

from __future__ import annotations

import enum
import hashlib
import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

__all__ = [
    "tokenize", "ocr_iou", "style_score_map", "composite_reward",
    "ResolutionCandidate", "warmup_gate", "difficulty_score",
    "RewardGroup", "reward_group_for_epoch",
    "ScorerResponse", "Scorer", "HashScorer",
]


def tokenize(text: str) -> Counter:
    """Whitespace-split, case-folded token multiset of a text."""
    return Counter(text.lower().split())


def ocr_iou(pred: Counter | Iterable[str], ref: Counter | Iterable[str]) -> float:
    """Multiset IoU: per-token min counts over per-token max counts.

    Two empty multisets count as a perfect match (1.0).
    """
    pred = pred if isinstance(pred, Counter) else Counter(pred)
    ref = ref if isinstance(ref, Counter) else Counter(ref)
    union = sum((pred | ref).values())
    if union == 0:
        return 1.0
    return sum((pred & ref).values()) / union


def style_score_map(s: int) -> float:
    """Map a discrete judge score in {1, 2, 3, 4} linearly onto [0, 1]."""
    if s not in (1, 2, 3, 4):
        raise ValueError(f"style score must be one of 1..4, got {s!r}")
    return (s - 1) / 3.0


def composite_reward(r_ocr: float, r_sty: float, lambda_sty: float = 0.5) -> float:
    """Group-1 reward r_ocr + lambda_sty * r_sty."""
    if not (0.0 <= r_ocr <= 1.0 and 0.0 <= r_sty <= 1.0):
        raise ValueError(f"component rewards must lie in [0, 1], got ({r_ocr}, {r_sty})")
    if lambda_sty < 0:
        raise ValueError(f"lambda_sty must be nonnegative, got {lambda_sty}")
    return r_ocr + lambda_sty * r_sty


@dataclass(frozen=True)
class ResolutionCandidate:
    label: str          # aspect-ratio tag, e.g. "16:9"
    height: int
    width: int
    base_prob: float
    difficulty: float

    def __post_init__(self):
        if not 0.0 <= self.base_prob <= 1.0:
            raise ValueError(f"base probability must lie in [0, 1], got {self.base_prob}")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError(f"difficulty must lie in [0, 1], got {self.difficulty}")


def warmup_gate(
    candidates: Sequence[ResolutionCandidate],
    epoch: int,
    warmup_epochs: int,
    delta: float = 0.3,
) -> np.ndarray:
    """Gate base probabilities by training progress and renormalize.

    Each candidate is scaled by clamp((min(e/E_warm, 1) - d_i)/delta + 1, 0, 1):
    easy resolutions sample from the start, harder ones fade in as the ramp
    passes their difficulty. At e >= E_warm all gates are 1 and the base
    probabilities return exactly.
    """
    if warmup_epochs < 1:
        raise ValueError(f"warmup duration must be >= 1 epoch, got {warmup_epochs}")
    if delta <= 0:
        raise ValueError(f"smoothing margin must be positive, got {delta}")
    base = np.array([c.base_prob for c in candidates], dtype=np.float64)
    if abs(base.sum() - 1.0) > 1e-9:
        raise ValueError(f"base probabilities must sum to 1, got {base.sum()}")
    progress = min(epoch / warmup_epochs, 1.0)
    d = np.array([c.difficulty for c in candidates], dtype=np.float64)
    gate = np.clip((progress - d) / delta + 1.0, 0.0, 1.0)
    if np.all(gate == 1.0):  # saturated ramp: base probabilities, untouched
        return base
    gated = base * gate
    total = gated.sum()
    if total == 0.0:
        raise ValueError(f"all candidates gated to zero at epoch {epoch}")
    return gated / total


def difficulty_score(
    height: int, width: int, candidate_dims: Sequence[tuple[int, int]]
) -> float:
    """Difficulty in [0, 1] from pixel count and aspect-ratio extremity.

    Half the score is the candidate's area fraction between the candidate
    set's smallest and largest areas; half is |log(H/W)| relative to the
    set's most extreme ratio. A degenerate set (single area, all square)
    scores 0 for every member.
    """
    if height <= 0 or width <= 0:
        raise ValueError(f"dimensions must be positive, got {height}x{width}")
    areas = [h * w for h, w in candidate_dims]
    ratios = [abs(np.log(h / w)) for h, w in candidate_dims]
    area_min, area_max = min(areas), max(areas)
    ratio_max = max(ratios)
    score = 0.0
    if area_max > area_min:
        score += 0.5 * (height * width - area_min) / (area_max - area_min)
    if ratio_max > 0:
        score += 0.5 * abs(np.log(height / width)) / ratio_max
    return float(np.clip(score, 0.0, 1.0))


class RewardGroup(enum.Enum):
    TEXT_AND_STYLE = 1  # multiset OCR IoU + weighted style score
    AESTHETICS = 2      # preference-model reward


def reward_group_for_epoch(epoch: int) -> RewardGroup:
    """Alternate reward groups every epoch; even epochs run text & style."""
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    return RewardGroup.TEXT_AND_STYLE if epoch % 2 == 0 else RewardGroup.AESTHETICS


@dataclass(frozen=True)
class ScorerResponse:
    score: float
    valid: bool


class Scorer(Protocol):
    """External judge interface: (image path, prompt, kind) -> (score, valid)."""

    def score(self, image_path: str, prompt: str, kind: str) -> ScorerResponse: ...


class HashScorer:
    """Reference stub: scores derived from a hash of the request.

    Hashes the image bytes when the path is readable (else the path text)
    together with the prompt and kind. `style` requests return an integer in
    {1, 2, 3, 4}; any other kind returns a float in [0, 1).
    """

    def score(self, image_path: str, prompt: str, kind: str) -> ScorerResponse:
        h = hashlib.sha256()
        if os.path.isfile(image_path):
            with open(image_path, "rb") as f:
                h.update(f.read())
        else:
            h.update(str(image_path).encode())
        h.update(b"\x00" + prompt.encode() + b"\x00" + kind.encode())
        value = int.from_bytes(h.digest()[:8], "little")
        if kind == "style":
            return ScorerResponse(score=float(1 + value % 4), valid=True)
        return ScorerResponse(score=(value % 10**6) / 10**6, valid=True)
