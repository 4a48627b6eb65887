"""Executable invariant suite behind the `verify` command.

Each check measures one property the library guarantees and reports a
number against a tolerance: error-style checks report the worst observed
deviation, structural checks report a violation count against 0. Checks
read the functions they exercise from a context dict, so a test can inject
a corrupted implementation and watch the right invariant fail by name.

Report format (one line per check, space-separated):

    <name> <pass|fail> measured=<float> tol=<float>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attention as attn
from . import autodiff as ad
from . import codec as codec_mod
from . import flow
from . import model as model_mod
from . import ops
from . import rewards
from . import rope as rope_mod
from . import sampler as sampler_mod
from .gradcheck import grad_check
from .rng import RandomStream

__all__ = ["CheckResult", "run_invariant_suite", "format_report", "parse_report",
           "CHECK_NAMES"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float


def _rng(label: str) -> np.random.Generator:
    stream = RandomStream.from_seed(1234).split(label)
    return stream._generator()


def _random_layout(g: np.random.Generator, include_noise: bool, max_tokens: int = 48):
    layout = []
    total = 0
    n_segments = int(g.integers(1, 5))
    for _ in range(n_segments):
        kind = int(g.integers(0, 3 if include_noise else 2))
        if kind == 0:
            size = int(g.integers(1, 7))
            layout.append(attn.Text(size))
        else:
            r, c = int(g.integers(1, 3)), int(g.integers(1, 4))
            seg = attn.CleanImage(r, c) if kind == 1 else attn.NoiseImage(r, c)
            size = seg.size
            layout.append(seg)
        total += size
        if total >= max_tokens:
            break
    return layout


# --- numerics ---------------------------------------------------------------

def _check_op_determinism(ctx):
    g = _rng("det")
    x = g.standard_normal((40, 12))
    gain = g.standard_normal(12)
    bad = 0
    bad += not np.array_equal(ops.gelu(x), ops.gelu(x.copy()))
    bad += not np.array_equal(ops.softmax_last(x), ops.softmax_last(x.copy()))
    bad += not np.array_equal(ops.rms_norm(x, gain, 1e-6), ops.rms_norm(x.copy(), gain, 1e-6))
    return float(bad), 0.0


def _check_softmax_rows(ctx):
    x = _rng("softrows").standard_normal((1000, 9)) * 30
    return float(np.abs(ops.softmax_last(x).sum(axis=1) - 1.0).max()), 1e-12


def _check_softmax_shift(ctx):
    x = _rng("softshift").standard_normal((200, 8))
    return float(np.abs(ops.softmax_last(x) - ops.softmax_last(x + 137.0)).max()), 1e-12


def _check_gradcheck_quadratic(ctx):
    report = grad_check(lambda p: (float(np.sum(p * p)), 2.0 * p), np.array([1.0, 2.0]))
    return report.max_rel_err, 1e-9


def _check_rng_reproducibility(ctx):
    s = RandomStream.from_seed(99)
    a, _ = s.normal((16,))
    b, _ = RandomStream(key=s.key, counter=s.counter).normal((16,))
    c, _ = s.split("other").normal((16,))
    return float((not np.array_equal(a, b)) + np.array_equal(a, c)), 0.0


# --- codec ------------------------------------------------------------------

def _tiny_codec():
    return codec_mod.codec_from_arrays(
        codec_mod.init_codec_arrays(8, RandomStream.from_seed(5))
    )


def _check_token_count(ctx):
    codec = _tiny_codec()
    bad = 0
    for h, w in ((32, 32), (32, 96), (64, 64), (96, 128)):
        img = _rng(f"tok{h}x{w}").standard_normal((3, h, w)) * 0.5
        grid = codec_mod.encode_image(img, codec)
        bad += grid.rows * grid.cols != (h * w) // 1024
    return float(bad), 0.0


def _check_decode_locality(ctx):
    codec = _tiny_codec()
    g = _rng("locality")
    states = g.standard_normal((4, 8))
    base = codec_mod.decode_patches(codec_mod.PatchGrid(2, 2, states), codec)
    bumped = states.copy()
    bumped[1] += 1.0
    out = codec_mod.decode_patches(codec_mod.PatchGrid(2, 2, bumped), codec)
    changed = np.abs(out - base).reshape(3, 2, 32, 2, 32).sum(axis=(0, 2, 4)) > 0
    return float(not np.array_equal(changed, np.array([[False, True], [False, False]]))), 0.0


def _check_pe_norm(ctx):
    pe = codec_mod.sinusoidal_pe2d(5, 7, 16)
    return float(np.abs(np.linalg.norm(pe, axis=1) - np.sqrt(8.0)).max()), 1e-9


# --- rope -------------------------------------------------------------------

def _check_rope_relative_position(ctx):
    apply_rope = ctx["apply_rope"]
    cfg = rope_mod.RopeConfig()
    g = _rng("rope-rel")
    worst = 0.0
    for _ in range(200):
        q, k = g.standard_normal(16), g.standard_normal(16)
        p1, p2, d = (tuple(int(v) for v in g.integers(0, 7, 3)) for _ in range(3))
        base = np.dot(
            ad.value_of(apply_rope(q, rope_mod.PositionTriple(*p1), cfg)),
            ad.value_of(apply_rope(k, rope_mod.PositionTriple(*p2), cfg)),
        )
        shifted = np.dot(
            ad.value_of(apply_rope(q, rope_mod.PositionTriple(*(a + b for a, b in zip(p1, d))), cfg)),
            ad.value_of(apply_rope(k, rope_mod.PositionTriple(*(a + b for a, b in zip(p2, d))), cfg)),
        )
        worst = max(worst, abs(base - shifted))
    return worst, 1e-10


def _check_rope_norm(ctx):
    apply_rope = ctx["apply_rope"]
    cfg = rope_mod.RopeConfig()
    g = _rng("rope-norm")
    worst = 0.0
    for _ in range(100):
        v = g.standard_normal(16)
        p = rope_mod.PositionTriple(*(int(x) for x in g.integers(0, 50, 3)))
        worst = max(worst, abs(np.linalg.norm(ad.value_of(apply_rope(v, p, cfg))) - np.linalg.norm(v)))
    return worst, 1e-12


def _check_rope_axis_separability(ctx):
    apply_rope = ctx["apply_rope"]
    cfg = rope_mod.RopeConfig()
    v = _rng("rope-axis").standard_normal(16)
    out = ad.value_of(apply_rope(v, rope_mod.PositionTriple(9, 0, 0), cfg))
    return float(not np.array_equal(out[cfg.dims_t:], v[cfg.dims_t:])), 0.0


def _check_rope_text_image_consistency(ctx):
    apply_rope = ctx["apply_rope"]
    cfg = rope_mod.RopeConfig()
    v = _rng("rope-ti").standard_normal(16)
    a = ad.value_of(apply_rope(v, rope_mod.PositionTriple(4, 0, 0), cfg))
    b = ad.value_of(apply_rope(v.copy(), rope_mod.PositionTriple(4, 0, 0), cfg))
    return float(not np.array_equal(a, b)), 0.0


# --- attention ---------------------------------------------------------------

def _check_noise_isolation(ctx):
    build_mask = ctx["build_mask"]
    g = _rng("noiso")
    bad = 0
    for _ in range(100):
        layout = _random_layout(g, include_noise=True)
        mask = build_mask(layout)
        kinds = attn.token_kinds(layout)
        clean_rows = kinds != attn.KIND_NOISE_IMAGE
        noise_cols = kinds == attn.KIND_NOISE_IMAGE
        bad += bool(np.any(mask[np.ix_(clean_rows, noise_cols)]))
    return float(bad), 0.0


def _check_blocked_equivalence(ctx):
    g = _rng("blockeq")
    worst = 0.0
    for _ in range(60):
        layout = _random_layout(g, include_noise=False)
        n = attn.layout_token_count(layout)
        q, k, v = (g.standard_normal((n, 8)) for _ in range(3))
        mask = attn.build_mask(layout)
        ref = attn.attend_reference(q, k, v, mask, 8 ** -0.5)
        plan = attn.build_block_plan(layout, int(g.integers(2, 6)))
        blocked, _ = attn.attend_blocked(q, k, v, plan, attn.row_cutoffs(layout))
        worst = max(worst, float(np.abs(ref - blocked).max()))
    return worst, 1e-10


def _check_plan_containment(ctx):
    g = _rng("contain")
    bad = 0
    for _ in range(60):
        layout = _random_layout(g, include_noise=False)
        mask = attn.build_mask(layout)
        plan = attn.build_block_plan(layout, 4)
        kinds = attn.token_kinds(layout)
        cutoffs = attn.row_cutoffs(layout)
        for blk in plan.blocks:
            for i in range(blk.start, blk.end):
                allowed = np.nonzero(mask[i])[0]
                if len(allowed) and allowed.max() >= blk.key_end:
                    bad += 1
                if not blk.extended and kinds[i] == attn.KIND_TEXT and cutoffs[i] > i + 1:
                    bad += 1
    return float(bad), 0.0


def _check_text_monotonicity(ctx):
    g = _rng("mono")
    bad = 0
    for _ in range(40):
        layout = _random_layout(g, include_noise=True)
        mask = attn.build_mask(layout)
        kinds = attn.token_kinds(layout)
        clean_cols = kinds != attn.KIND_NOISE_IMAGE
        for i in range(len(kinds) - 1):
            if kinds[i] == attn.KIND_TEXT and kinds[i + 1] == attn.KIND_TEXT:
                a = mask[i] & clean_cols
                b = mask[i + 1] & clean_cols
                bad += bool(np.any(a & ~b))
    return float(bad), 0.0


def _check_pure_text_fastpath(ctx):
    plan = attn.build_block_plan([attn.Text(16)], 4)
    return float(sum(b.extended for b in plan.blocks)), 0.0


# --- model ------------------------------------------------------------------

def _tiny_model(seed: int = 11) -> model_mod.ModelParams:
    cfg = model_mod.ModelConfig(
        vocab=8, width=16, layers=1, q_heads=2, kv_heads=1,
        rope=rope_mod.RopeConfig(dims_t=4, dims_h=2, dims_w=2),
        cond_freq_dim=8, ffn_mult=2,
    )
    return model_mod.ModelParams.init(cfg, RandomStream.from_seed(seed))


def _randomize_stream(params: model_mod.ModelParams, stream: str, seed: int):
    out = {k: v.copy() for k, v in params.arrays.items()}
    g = _rng(f"perturb{seed}")
    for k in out:
        if f".{stream}." in k or k == f"final_norm.{stream}":
            out[k] = g.standard_normal(out[k].shape)
    return model_mod.ModelParams(params.config, out)


def _check_stream_isolation(ctx):
    params = _tiny_model()
    seq = model_mod.TokenSequence(segments=[model_mod.TextTokens(np.array([1, 2, 3]))])
    base = ad.value_of(model_mod.model_forward(seq, params).text_logits)
    other = ad.value_of(model_mod.model_forward(seq, _randomize_stream(params, "gen", 1)).text_logits)
    return float(not np.array_equal(base, other)), 0.0


def _check_conditioning_sensitivity(ctx):
    params = _tiny_model()
    g = _rng("cond")
    z = g.standard_normal((3, 32, 32))
    caption = np.array([1, 2, 3])

    def run(t):
        seq = model_mod.TokenSequence.for_t2i(caption, z, t, 1.0, caption_targets=False)
        out = model_mod.model_forward(seq, params)
        return ad.value_of(out.text_logits), ad.value_of(out.xhat[0])

    logits_a, xhat_a = run(0.25)
    logits_b, xhat_b = run(0.75)
    bad = (not np.array_equal(logits_a, logits_b)) + np.array_equal(xhat_a, xhat_b)
    return float(bad), 0.0


# --- flow -------------------------------------------------------------------

def _check_vstar_invariance(ctx):
    g = _rng("vstar")
    x, eps = g.standard_normal((3, 8, 8)), g.standard_normal((3, 8, 8))
    sigma = 1.7
    values = [
        flow.target_velocity(x, flow.interpolate(x, eps, t, sigma), t)
        for t in np.linspace(0.05, 0.95, 10)
    ]
    spread = max(float(np.abs(v - values[0]).max()) for v in values)
    return spread, 1e-9


def _check_interpolant_endpoints(ctx):
    g = _rng("endp")
    x, eps = g.standard_normal((3, 4, 4)), g.standard_normal((3, 4, 4))
    sigma = 2.5
    bad = not np.array_equal(flow.interpolate(x, eps, 0.0, sigma), sigma * eps)
    bad += not np.array_equal(flow.interpolate(x, eps, 1.0, sigma), x)
    return float(bad), 0.0


def _check_perfect_prediction(ctx):
    g = _rng("perfect")
    x, eps = g.standard_normal((3, 4, 4)), g.standard_normal((3, 4, 4))
    worst = 0.0
    for t in (0.1, 0.5, 0.9):
        z = flow.interpolate(x, eps, t, 1.3)
        diff = np.abs(np.asarray(flow.xpred_to_velocity(x, z, t)) - flow.target_velocity(x, z, t))
        worst = max(worst, float(diff.max()))
    return worst, 1e-12


def _check_sqrt_law(ctx):
    noise_scale = ctx["noise_scale"]
    cfg = flow.NoiseScaleConfig(sigma0=1.0, n0=64, sigma_max=64.0)
    g = _rng("sqrt")
    bad = 0
    for _ in range(50):
        h = 32 * int(g.integers(1, 12))
        w = 32 * int(g.integers(1, 12))
        bad += noise_scale(2 * h, 2 * w, cfg) != 2.0 * noise_scale(h, w, cfg)
    return float(bad), 0.0


def _check_text_loss_shift(ctx):
    g = _rng("tls")
    logits = g.standard_normal((6, 9))
    targets = g.integers(0, 9, 6)
    a = float(ad.value_of(flow.text_loss(logits, targets)))
    b = float(ad.value_of(flow.text_loss(logits + 41.5, targets)))
    return abs(a - b), 1e-12


# --- sampler ----------------------------------------------------------------

def _triple(g) -> sampler_mod.GuidanceTriple:
    return sampler_mod.GuidanceTriple(*(g.standard_normal((3, 8, 8)) for _ in range(3)))


def _check_guide_affine(ctx):
    g = _rng("affine")
    t = _triple(g)
    scaled = sampler_mod.GuidanceTriple(2.5 * t.v_full, 2.5 * t.v_img, 2.5 * t.v_unc)
    diff = np.abs(sampler_mod.guide(scaled, 4.0, 1.0) - 2.5 * sampler_mod.guide(t, 4.0, 1.0))
    return float(diff.max()), 1e-12


def _check_gamma_one_identity(ctx):
    t = _triple(_rng("gid"))
    return float(not np.array_equal(sampler_mod.guide(t, 1.0, 1.0), t.v_full)), 0.0


def _check_final_step_identity(ctx):
    g = _rng("final")
    z = g.standard_normal((3, 8, 8))
    xhats = [g.standard_normal((3, 8, 8)) for _ in range(3)]
    t = 0.9
    velocities = sampler_mod.GuidanceTriple(
        *(np.asarray(flow.xpred_to_velocity(x, z, t)) for x in xhats)
    )
    path_a = z + (1.0 - t) * sampler_mod.guide(velocities, 4.0, 1.0)
    xg = sampler_mod.guide(sampler_mod.GuidanceTriple(*xhats), 4.0, 1.0)
    path_b = z + (1.0 - t) * np.asarray(flow.xpred_to_velocity(xg, z, t))
    return float(np.abs(path_a - path_b).max()), 1e-12


def _check_renorm_norm(ctx):
    g = _rng("renorm")
    guided, ref = g.standard_normal((3, 8, 8)), g.standard_normal((3, 8, 8))
    out, applied = sampler_mod.cfg_renorm(guided, ref)
    rel = abs(np.linalg.norm(out) - np.linalg.norm(ref)) / np.linalg.norm(ref)
    return float(rel + (not applied)), 1e-12


# --- rewards ----------------------------------------------------------------

def _check_iou_properties(ctx):
    g = _rng("iou")
    words = [f"w{i}" for i in range(6)]
    bad = 0
    for _ in range(200):
        a = [words[int(i)] for i in g.integers(0, 6, int(g.integers(0, 8)))]
        b = [words[int(i)] for i in g.integers(0, 6, int(g.integers(0, 8)))]
        ab, ba = rewards.ocr_iou(a, b), rewards.ocr_iou(b, a)
        bad += ab != ba
        bad += rewards.ocr_iou(a, a) != 1.0
        bad += not (0.0 <= ab <= 1.0)
    return float(bad), 0.0


def _example_candidates():
    dims = [(1536, 1536), (2048, 2048), (1536, 864), (2048, 1152)]
    return [
        rewards.ResolutionCandidate(f"c{i}", h, w, 1.0 / len(dims),
                                    rewards.difficulty_score(h, w, dims))
        for i, (h, w) in enumerate(dims)
    ]


def _check_gate_sum(ctx):
    cands = _example_candidates()
    worst = 0.0
    for e in range(0, 12, 2):
        worst = max(worst, abs(rewards.warmup_gate(cands, e, 10).sum() - 1.0))
    return worst, 1e-12


def _check_gate_monotone_and_baseline(ctx):
    cands = _example_candidates()
    bad = 0
    prev = None
    for e in range(0, 11):
        gated = np.array([c.base_prob for c in cands]) * np.clip(
            (min(e / 10, 1.0) - np.array([c.difficulty for c in cands])) / 0.3 + 1.0, 0.0, 1.0
        )
        if prev is not None:
            bad += bool(np.any(gated < prev - 1e-15))
        prev = gated
    base = np.array([c.base_prob for c in cands])
    bad += not np.array_equal(rewards.warmup_gate(cands, 10, 10), base)
    bad += not np.array_equal(rewards.warmup_gate(cands, 25, 10), base)
    return float(bad), 0.0


def _check_style_monotone(ctx):
    values = [rewards.style_score_map(s) for s in (1, 2, 3, 4)]
    return float(values != sorted(set(values)) or values[0] != 0.0 or values[-1] != 1.0), 0.0


_CHECKS = [
    ("numerics.op_determinism", _check_op_determinism),
    ("numerics.softmax_rows", _check_softmax_rows),
    ("numerics.softmax_shift", _check_softmax_shift),
    ("numerics.gradcheck_quadratic", _check_gradcheck_quadratic),
    ("numerics.rng_reproducibility", _check_rng_reproducibility),
    ("codec.token_count", _check_token_count),
    ("codec.decode_locality", _check_decode_locality),
    ("codec.pe_norm", _check_pe_norm),
    ("rope.relative_position", _check_rope_relative_position),
    ("rope.norm_preservation", _check_rope_norm),
    ("rope.axis_separability", _check_rope_axis_separability),
    ("rope.text_image_consistency", _check_rope_text_image_consistency),
    ("attention.noise_isolation", _check_noise_isolation),
    ("attention.blocked_equivalence", _check_blocked_equivalence),
    ("attention.plan_containment", _check_plan_containment),
    ("attention.text_monotonicity", _check_text_monotonicity),
    ("attention.pure_text_fastpath", _check_pure_text_fastpath),
    ("mot.stream_isolation", _check_stream_isolation),
    ("mot.conditioning_sensitivity", _check_conditioning_sensitivity),
    ("flow.vstar_invariance", _check_vstar_invariance),
    ("flow.interpolant_endpoints", _check_interpolant_endpoints),
    ("flow.perfect_prediction", _check_perfect_prediction),
    ("flow.sqrt_law", _check_sqrt_law),
    ("flow.text_loss_shift", _check_text_loss_shift),
    ("sampler.guide_affine", _check_guide_affine),
    ("sampler.gamma_one_identity", _check_gamma_one_identity),
    ("sampler.final_step_identity", _check_final_step_identity),
    ("sampler.renorm_norm", _check_renorm_norm),
    ("rewards.iou_properties", _check_iou_properties),
    ("rewards.gate_sum", _check_gate_sum),
    ("rewards.gate_monotone_and_baseline", _check_gate_monotone_and_baseline),
    ("rewards.style_monotone", _check_style_monotone),
]

CHECK_NAMES = [name for name, _ in _CHECKS]

_DEFAULT_CONTEXT = {
    "apply_rope": rope_mod.apply_rope,
    "build_mask": attn.build_mask,
    "noise_scale": flow.noise_scale,
}


def run_invariant_suite(name_filter: str | None = None, overrides: dict | None = None):
    """Run every (matching) invariant check and return its results."""
    ctx = dict(_DEFAULT_CONTEXT)
    if overrides:
        unknown = set(overrides) - set(ctx)
        if unknown:
            raise ValueError(f"unknown override targets: {sorted(unknown)}")
        ctx.update(overrides)
    results = []
    for name, fn in _CHECKS:
        if name_filter and not name.startswith(name_filter):
            continue
        measured, tol = fn(ctx)
        results.append(CheckResult(name=name, passed=bool(measured <= tol),
                                   measured=float(measured), tolerance=float(tol)))
    if not results:
        raise ValueError(f"no invariant checks match filter {name_filter!r}")
    return results


def format_report(results) -> str:
    lines = []
    for r in results:
        status = "pass" if r.passed else "fail"
        lines.append(f"{r.name} {status} measured={r.measured:.6e} tol={r.tolerance:.6e}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> list[CheckResult]:
    results = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        name, status, measured, tol = line.split()
        results.append(CheckResult(
            name=name, passed=status == "pass",
            measured=float(measured.split("=", 1)[1]),
            tolerance=float(tol.split("=", 1)[1]),
        ))
    return results
