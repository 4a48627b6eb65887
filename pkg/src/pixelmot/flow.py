"""Training-objective arithmetic for pixel-space rectified flow.

The noisy state interpolates linearly between scaled terminal noise and the
clean image, z_t = t*x + (1-t)*sigma_R*eps, so t=0 is pure noise and t=1 the
image. The network regresses the clean signal; its prediction is converted
to a velocity, (xhat - z_t)/(1-t), and trained with MSE against the target
velocity (x - z_t)/(1-t), which for interpolant-consistent states is the
constant x - sigma_R*eps. The terminal noise standard deviation grows with
the square root of the token count so per-token SNR is resolution-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .codec import PATCH
from .rng import RandomStream

__all__ = [
    "EPS_CLAMP", "NoiseScaleConfig", "FlowSample", "LossWeights", "ConditionFlags",
    "noise_scale", "sample_t", "interpolate", "target_velocity",
    "xpred_to_velocity", "gen_loss", "text_loss", "total_loss",
    "drop_conditions", "make_flow_sample",
]

# Guard for the 1/(1-t) conversion singularity. The logit-normal sampler
# never reaches t=1, but the conversion refuses to divide by ~0 regardless.
EPS_CLAMP = 1e-4


@dataclass(frozen=True)
class NoiseScaleConfig:
    sigma0: float = 1.0
    n0: float = 64.0
    sigma_max: float = 8.0

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.n0 < 1:
            raise ValueError(f"reference token count must be >= 1, got {self.n0}")
        if self.sigma_max < self.sigma0:
            raise ValueError(f"sigma_max ({self.sigma_max}) must be >= sigma0 ({self.sigma0})")

    @classmethod
    def for_resolutions(cls, base_hw: int, max_hw: int, sigma0: float = 1.0) -> "NoiseScaleConfig":
        """Anchor n0 at the base resolution and sigma_max at the largest one."""
        n0 = (base_hw * base_hw) / (PATCH * PATCH)
        probe = cls(sigma0=sigma0, n0=n0, sigma_max=sigma0)
        return cls(sigma0=sigma0, n0=n0, sigma_max=noise_scale(max_hw, max_hw, probe))


def noise_scale(height: int, width: int, cfg: NoiseScaleConfig) -> float:
    """Resolution-adaptive terminal noise scale sigma0 * sqrt(N / n0)."""
    if height % PATCH or width % PATCH or height <= 0 or width <= 0:
        raise ValueError(f"dimensions must be positive multiples of {PATCH}, got {height}x{width}")
    n_tokens = (height * width) / (PATCH * PATCH)
    return cfg.sigma0 * np.sqrt(n_tokens / cfg.n0)


def sample_t(rng: RandomStream, mu: float = -0.8, sigma: float = 0.8) -> tuple[float, RandomStream]:
    """Draw a flow time from the logit-normal: logistic(mu + sigma * N(0,1))."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n, rng = rng.normal(())
    return float(1.0 / (1.0 + np.exp(-(mu + sigma * n)))), rng


def interpolate(x, eps, t: float, sigma_r: float):
    """The rectified-flow state z_t = t*x + (1-t)*sigma_r*eps."""
    x, eps = np.asarray(x, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs eps {eps.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t * x + (1.0 - t) * sigma_r * eps


def _check_t_for_velocity(t: float) -> float:
    if t > 1.0 - EPS_CLAMP:
        raise ValueError(f"t={t} is within {EPS_CLAMP} of the conversion singularity at 1")
    return 1.0 / (1.0 - t)


def target_velocity(x, z_t, t: float):
    """v* = (x - z_t) / (1 - t); constant in t for interpolant-consistent inputs."""
    inv = _check_t_for_velocity(t)
    x, z_t = np.asarray(x, dtype=np.float64), np.asarray(z_t, dtype=np.float64)
    if x.shape != z_t.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs z_t {z_t.shape}")
    return (x - z_t) * inv


def xpred_to_velocity(x_hat, z_t, t: float):
    """Convert a clean-signal prediction to a velocity: (xhat - z_t) / (1 - t)."""
    inv = _check_t_for_velocity(t)
    if ad.value_of(x_hat).shape != np.asarray(z_t).shape:
        raise ValueError(
            f"shape mismatch: x_hat {ad.value_of(x_hat).shape} vs z_t {np.asarray(z_t).shape}"
        )
    return ad.scale(ad.sub(x_hat, np.asarray(z_t, dtype=np.float64)), inv)


def gen_loss(v_theta, v_star):
    """Mean squared velocity error over all entries of the noise block."""
    if ad.value_of(v_theta).shape != ad.value_of(v_star).shape:
        raise ValueError(
            f"shape mismatch: {ad.value_of(v_theta).shape} vs {ad.value_of(v_star).shape}"
        )
    return ad.vmean(ad.square(ad.sub(v_theta, v_star)))


def text_loss(logits, targets):
    """Mean next-token cross-entropy: -(1/N) sum log p(target | prefix)."""
    targets = np.asarray(targets, dtype=np.int64)
    lv = ad.value_of(logits)
    if lv.ndim != 2 or targets.shape != (lv.shape[0],):
        raise ValueError(f"need one target per predicted position: {lv.shape} vs {targets.shape}")
    if lv.shape[0] == 0:
        raise ValueError("text_loss requires at least one predicted position")
    if np.any((targets < 0) | (targets >= lv.shape[1])):
        raise ValueError(f"targets out of vocabulary range [0, {lv.shape[1]})")
    logp = ad.take_index_last(ad.log_softmax_last(logits), targets)
    return ad.scale(ad.vmean(logp), -1.0)


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.1  # understanding (text) weight
    lambda2: float = 1.0  # generation (velocity) weight

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ValueError("loss weights must not both be zero")


def total_loss(und, gen, weights: LossWeights):
    """L = lambda1 * L_und + lambda2 * L_gen."""
    for name, v in (("understanding", und), ("generation", gen)):
        if not np.isfinite(float(ad.value_of(v))):
            raise ValueError(f"{name} loss component is not finite")
    return ad.add(ad.scale(und, weights.lambda1), ad.scale(gen, weights.lambda2))


@dataclass(frozen=True)
class ConditionFlags:
    text_present: bool
    image_context_present: bool

    def __post_init__(self):
        if self.text_present and not self.image_context_present:
            raise ValueError("image context absent implies the unconditional branch")


def drop_conditions(
    rng: RandomStream, p_text: float = 0.10, p_all: float = 0.10
) -> tuple[ConditionFlags, RandomStream]:
    """Condition dropout: with p_all drop everything, else with p_text drop text."""
    if min(p_text, p_all) < 0 or p_text + p_all > 1:
        raise ValueError(f"invalid dropout probabilities ({p_text}, {p_all})")
    u, rng = rng.uniform(())
    u = float(u)
    if u < p_all:
        return ConditionFlags(False, False), rng
    if u < p_all + p_text:
        return ConditionFlags(False, True), rng
    return ConditionFlags(True, True), rng


@dataclass(frozen=True)
class FlowSample:
    """One training draw; z_t satisfies the interpolant identity exactly."""

    x: np.ndarray
    eps: np.ndarray
    t: float
    sigma_r: float
    z_t: np.ndarray


def make_flow_sample(
    x: np.ndarray, rng: RandomStream, sigma_r: float,
    mu: float = -0.8, sigma: float = 0.8,
) -> tuple[FlowSample, RandomStream]:
    """Draw (eps, t) and assemble the interpolated state for one clean image."""
    x = np.asarray(x, dtype=np.float64)
    t, rng = sample_t(rng, mu, sigma)
    eps, rng = rng.normal(x.shape)
    return FlowSample(x=x, eps=eps, t=t, sigma_r=sigma_r,
                      z_t=interpolate(x, eps, t, sigma_r)), rng
