"""pixelmot: a desk-scale unified multimodal transformer, in numpy.

Pixel-patch encoding/decoding, multi-axis rotary embeddings, token-type
routed dual-stream transformer blocks under one hybrid attention mask with a
block-level fast-path planner, pixel-space rectified-flow training with dual
classifier-free guidance sampling, and the post-training reward arithmetic.
Everything runs in float64 on the CPU and is deterministic from its seeds.
"""

from .attention import (
    BlockPlan,
    CleanImage,
    NoiseImage,
    Text,
    attend_blocked,
    attend_reference,
    build_block_plan,
    build_mask,
    row_cutoffs,
)
from .codec import CodecParams, PatchGrid, decode_patches, encode_image, sinusoidal_pe2d
from .config import TrainConfig, format_config, load_config, parse_config_text
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import SyntheticSpec, make_dataset, pixel_probe
from .flow import (
    ConditionFlags,
    FlowSample,
    LossWeights,
    NoiseScaleConfig,
    drop_conditions,
    gen_loss,
    interpolate,
    make_flow_sample,
    noise_scale,
    sample_t,
    target_velocity,
    text_loss,
    total_loss,
    xpred_to_velocity,
)
from .gradcheck import GradCheckReport, grad_check
from .model import (
    ModelConfig,
    ModelParams,
    TokenSequence,
    model_forward,
    ns_embed,
    route,
    timestep_embed,
)
from .ppm import read_ppm, write_ppm
from .rewards import (
    HashScorer,
    ResolutionCandidate,
    RewardGroup,
    Scorer,
    composite_reward,
    difficulty_score,
    ocr_iou,
    reward_group_for_epoch,
    style_score_map,
    warmup_gate,
)
from .rng import RandomStream
from .rope import PositionTriple, RopeConfig, apply_rope, apply_rope_many, assign_positions
from .sampler import (
    GuidanceTriple,
    SamplerConfig,
    cfg_renorm,
    euler_step,
    guide,
    init_noise,
    sample,
    shifted_schedule,
)
from .training import clip_grad_norm, ema_update, psnr, train
from .verify import run_invariant_suite

__version__ = "0.1.0"
