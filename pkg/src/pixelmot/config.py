"""Training configuration and its key-value text format.

Config files are plain `key = value` lines ('#' starts a comment). Every
hyperparameter of the training recipe maps to one key; `TrainConfig` is the
typed in-memory form and round-trips losslessly through the text form, which
is also what checkpoints embed as their config echo.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .flow import LossWeights, NoiseScaleConfig
from .model import ModelConfig
from .rope import RopeConfig

__all__ = ["TrainConfig", "parse_config_text", "format_config", "load_config"]


@dataclass(frozen=True)
class TrainConfig:
    # model
    vocab: int = 64
    width: int = 64
    layers: int = 2
    q_heads: int = 4
    kv_heads: int = 1
    rope_dims: tuple = (8, 4, 4)
    rope_theta_t: float = 5_000_000.0
    rope_theta_spatial: float = 10_000.0
    cond_freq_dim: int = 32
    ffn_mult: int = 4
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    ema_ratio: float = 0.999
    # losses and conditioning dropout
    lambda_text: float = 0.1
    lambda_gen: float = 1.0
    p_drop_text: float = 0.10
    p_drop_all: float = 0.10
    # flow
    t_mu: float = -0.8
    t_sigma: float = 0.8
    sigma0: float = 1.0
    noise_base_hw: int = 64
    noise_max_hw: int = 64
    # run
    steps: int = 2000
    batch: int = 8
    seed: int = 7
    # dataset
    image_size: int = 64
    data_count: int = 256
    data_seed: int = 0
    # vocabulary echo (space-joined words), so samplers can tokenize prompts
    vocab_words: str = ""

    def __post_init__(self):
        positive = ("vocab", "width", "layers", "q_heads", "kv_heads", "ffn_mult",
                    "cond_freq_dim", "lr", "grad_clip", "batch", "image_size",
                    "data_count", "t_sigma", "sigma0", "noise_base_hw", "noise_max_hw")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if not 0.0 <= self.ema_ratio < 1.0:
            raise ValueError(f"ema_ratio must lie in [0, 1), got {self.ema_ratio}")
        for name in ("beta1", "beta2", "p_drop_text", "p_drop_all"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {getattr(self, name)}")

    def model_config(self) -> ModelConfig:
        dt, dh, dw = self.rope_dims
        return ModelConfig(
            vocab=self.vocab, width=self.width, layers=self.layers,
            q_heads=self.q_heads, kv_heads=self.kv_heads,
            rope=RopeConfig(dims_t=dt, dims_h=dh, dims_w=dw,
                            theta_t=self.rope_theta_t,
                            theta_h=self.rope_theta_spatial,
                            theta_w=self.rope_theta_spatial),
            cond_freq_dim=self.cond_freq_dim, ffn_mult=self.ffn_mult,
        )

    def noise_config(self) -> NoiseScaleConfig:
        return NoiseScaleConfig.for_resolutions(
            self.noise_base_hw, self.noise_max_hw, self.sigma0
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_text, self.lambda_gen)


_KEYS = {
    "model.vocab": "vocab", "model.width": "width", "model.layers": "layers",
    "model.q_heads": "q_heads", "model.kv_heads": "kv_heads",
    "model.rope_dims": "rope_dims", "model.rope_theta_t": "rope_theta_t",
    "model.rope_theta_spatial": "rope_theta_spatial",
    "model.cond_freq_dim": "cond_freq_dim", "model.ffn_mult": "ffn_mult",
    "opt.lr": "lr", "opt.beta1": "beta1", "opt.beta2": "beta2",
    "opt.eps": "adam_eps", "opt.weight_decay": "weight_decay",
    "opt.grad_clip": "grad_clip", "opt.ema_ratio": "ema_ratio",
    "loss.lambda_text": "lambda_text", "loss.lambda_gen": "lambda_gen",
    "dropout.p_text": "p_drop_text", "dropout.p_all": "p_drop_all",
    "tsampler.mu": "t_mu", "tsampler.sigma": "t_sigma",
    "noise.sigma0": "sigma0", "noise.base_hw": "noise_base_hw",
    "noise.max_hw": "noise_max_hw",
    "run.steps": "steps", "run.batch": "batch", "run.seed": "seed",
    "data.image_size": "image_size", "data.count": "data_count",
    "data.seed": "data_seed", "vocab.words": "vocab_words",
}
_FIELD_TO_KEY = {v: k for k, v in _KEYS.items()}


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return "/".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(text: str, target_type):
    if target_type is tuple:
        return tuple(int(v) for v in text.split("/"))
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def format_config(cfg: TrainConfig) -> str:
    lines = ["# pixelmot training configuration"]
    for f in fields(TrainConfig):
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> TrainConfig:
    field_types = {f.name: f for f in fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _KEYS:
            raise ValueError(f"unknown config key {key!r} on line {lineno}")
        name = _KEYS[key]
        default = field_types[name].default
        target = tuple if isinstance(default, tuple) else type(default)
        values[name] = _parse_value(value, target)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())
