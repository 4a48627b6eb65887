"""Joint training loop: AdamW, global gradient clipping, EMA shadow.

Every step draws a batch of caption/image pairs, applies condition dropout,
samples a flow time and terminal noise per sample, and optimizes the
weighted sum of next-token cross-entropy over caption tokens and velocity
MSE over the noise block. The whole run is a pure function of (config,
data): metrics, parameters, and the EMA shadow reproduce bit-for-bit across
identically-seeded runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint
from .config import TrainConfig, format_config
from .flow import (
    ConditionFlags,
    drop_conditions,
    gen_loss,
    interpolate,
    noise_scale,
    sample_t,
    target_velocity,
    text_loss,
    total_loss,
    xpred_to_velocity,
)
from .model import ModelParams, TokenSequence, model_forward
from .rng import RandomStream

__all__ = [
    "MetricsRecord", "TrainResult", "sample_losses",
    "clip_grad_norm", "ema_update", "adamw_step", "AdamState",
    "train", "format_metrics", "parse_metrics", "psnr",
]


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    ce: float
    mse: float
    total: float
    grad_norm: float


METRICS_HEADER = "# step ce mse total grad_norm"


def format_metrics(records) -> str:
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(f"{r.step} {r.ce:.10g} {r.mse:.10g} {r.total:.10g} {r.grad_norm:.10g}")
    return "\n".join(lines) + "\n"


def parse_metrics(text: str) -> list[MetricsRecord]:
    records = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        step, ce, mse, tot, gn = line.split()
        records.append(MetricsRecord(int(step), float(ce), float(mse), float(tot), float(gn)))
    return records


def clip_grad_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns (gradients, pre-clip global norm).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    sq = sum(float(np.dot(g.ravel(), g.ravel())) for g in grads.values())
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        factor = max_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm

def ema_update(shadow: dict, params: dict, ratio: float) -> dict:
    """shadow <- ratio * shadow + (1 - ratio) * params, elementwise."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"EMA ratio must lie in [0, 1), got {ratio}")
    return {k: ratio * shadow[k] + (1.0 - ratio) * params[k] for k in shadow}


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    inv_sqrt_c2 = (1.0 - b2 ** state.step) ** -0.5
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        tmp = np.square(g)
        tmp *= 1.0 - b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp *= inv_sqrt_c2
        tmp += cfg.adam_eps
        np.divide(m, tmp, out=tmp)
        tmp *= cfg.lr / c1
        if cfg.weight_decay:
            p -= cfg.lr * cfg.weight_decay * p
        p -= tmp


def sample_losses(
    params: ModelParams,
    caption_ids: np.ndarray,
    image: np.ndarray,
    flags: ConditionFlags,
    t: float,
    eps: np.ndarray,
    sigma_r: float,
    sigma_bar: float,
    weights,
):
    """Per-sample losses: (total, ce value, mse value).

    The text component averages next-token cross-entropy over caption
    positions with targets; a sample whose caption was dropped contributes
    no text term (reported ce is nan for it).
    """
    z_t = interpolate(image, eps, t, sigma_r)
    seq = TokenSequence.for_t2i(caption_ids, z_t, t, sigma_bar,
                                text_present=flags.text_present)
    out = model_forward(seq, params)
    v_star = target_velocity(image, z_t, t)
    v_theta = xpred_to_velocity(out.xhat[0], z_t, t)
    mse = gen_loss(v_theta, v_star)

    has_target = out.text_targets >= 0
    if np.any(has_target):
        idx = np.nonzero(has_target)[0]
        ce = text_loss(ad.gather_rows(out.text_logits, idx), out.text_targets[idx])
        ce_value = float(ad.value_of(ce))
    else:
        ce, ce_value = 0.0, float("nan")
    total = total_loss(ce, mse, weights)
    return total, ce_value, float(ad.value_of(mse))


@dataclass
class TrainResult:
    params: ModelParams
    ema: dict
    metrics: list
    checkpoint: Checkpoint


def train(cfg: TrainConfig, data, metrics_path=None) -> TrainResult:
    """Run the joint objective for cfg.steps over the given dataset."""
    root = RandomStream.from_seed(cfg.seed)
    model_cfg = cfg.model_config()
    params = ModelParams.init(model_cfg, root.split("init"))
    opt = AdamState.zeros_like(params.arrays)
    ema = {k: v.copy() for k, v in params.arrays.items()}
    weights = cfg.loss_weights()
    noise_cfg = cfg.noise_config()

    metrics: list[MetricsRecord] = []
    for step in range(1, cfg.steps + 1):
        step_rng = root.split(f"step.{step}")
        batch_idx, step_rng = step_rng.integers(0, len(data), (cfg.batch,))
        lifted = params.lifted()
        ce_values, mse_values, total_values = [], [], []
        for slot, data_index in enumerate(batch_idx):
            s = step_rng.split(f"slot.{slot}")
            flags, s = drop_conditions(s, cfg.p_drop_text, cfg.p_drop_all)
            t, s = sample_t(s, cfg.t_mu, cfg.t_sigma)
            caption_ids, image = data[int(data_index)]
            eps, s = s.normal(image.shape)
            sigma_r = noise_scale(image.shape[1], image.shape[2], noise_cfg)
            total, ce_value, mse_value = sample_losses(
                lifted, caption_ids, image, flags, t, eps,
                sigma_r, sigma_r / noise_cfg.sigma_max, weights,
            )
            total_value = float(ad.value_of(total))
            if not np.isfinite(total_value):
                raise ValueError(
                    f"non-finite loss {total_value} at step {step} (sample {int(data_index)}, "
                    f"t={t:.6f}, text={flags.text_present})"
                )
            ad.backward(ad.scale(total, 1.0 / cfg.batch))
            ce_values.append(ce_value)
            mse_values.append(mse_value)
            total_values.append(total_value)

        grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
                 for k, v in lifted.arrays.items()}
        grads, grad_norm = clip_grad_norm(grads, cfg.grad_clip)
        adamw_step(params.arrays, grads, opt, cfg)
        for k, shadow in ema.items():  # in-place EMA: shadow <- r*shadow + (1-r)*p
            shadow *= cfg.ema_ratio
            shadow += (1.0 - cfg.ema_ratio) * params.arrays[k]

        ce_seen = [c for c in ce_values if np.isfinite(c)]
        metrics.append(MetricsRecord(
            step=step,
            ce=float(np.mean(ce_seen)) if ce_seen else 0.0,
            mse=float(np.mean(mse_values)),
            total=float(np.mean(total_values)),
            grad_norm=grad_norm,
        ))

    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as f:
            f.write(format_metrics(metrics))

    final_rng = root.split(f"step.{cfg.steps + 1}")
    ckpt = Checkpoint(
        config_text=format_config(cfg),
        step=cfg.steps,
        rng_key=final_rng.key,
        rng_counter=final_rng.counter,
        arrays={k: v.copy() for k, v in params.values().items()},
        ema={k: v.copy() for k, v in ema.items()},
    )
    return TrainResult(params=params, ema=ema, metrics=metrics, checkpoint=ckpt)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [-1, 1]-ranged images."""
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(4.0 / mse)
