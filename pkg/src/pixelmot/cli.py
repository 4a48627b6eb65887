"""Command-line entry points: train, sample, verify, bench, reward.

Exit codes: 0 ok, 1 invariant/check failure, 2 usage error. Set
PIXELMOT_THREADS to cap BLAS thread counts; it must take effect before
numpy loads, so this module defers all heavy imports into the handlers.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

__all__ = ["main"]


def _apply_thread_env() -> None:
    threads = os.environ.get("PIXELMOT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _cmd_train(args) -> int:
    from .config import format_config, load_config
    from .checkpoint import save_checkpoint
    from .data import SyntheticSpec, make_dataset
    from .training import train

    cfg = load_config(args.config)
    spec = SyntheticSpec(seed=cfg.data_seed, image_size=cfg.image_size, count=cfg.data_count)
    if not cfg.vocab_words:
        cfg = type(cfg)(**{**cfg.__dict__, "vocab_words": " ".join(spec.vocab)})
    data = make_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(spec.describe())
    result = train(cfg, data, metrics_path=out / "metrics.log")
    save_checkpoint(out / "checkpoint.bin", result.checkpoint)
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    if result.metrics:
        last = result.metrics[-1]
        print(f"trained {last.step} steps: ce={last.ce:.4f} mse={last.mse:.4f} "
              f"total={last.total:.4f}")
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'metrics.log'}")
    return 0


def _cmd_sample(args) -> int:
    from .checkpoint import load_checkpoint
    from .config import parse_config_text
    from .model import ModelParams
    from .ppm import write_ppm
    from .rng import RandomStream
    from .sampler import SamplerConfig, sample

    ckpt = load_checkpoint(args.checkpoint)
    cfg = parse_config_text(ckpt.config_text)
    params = ModelParams(cfg.model_config(), ckpt.ema if args.ema else ckpt.arrays)
    vocab = cfg.vocab_words.split()
    words = Path(args.prompt_file).read_text(encoding="utf-8").split()
    try:
        caption = [vocab.index(w) for w in words]
    except ValueError:
        unknown = [w for w in words if w not in vocab]
        print(f"error: prompt words not in model vocabulary: {unknown}", file=sys.stderr)
        return 2
    sampler_cfg = SamplerConfig(steps=args.steps, shift=args.shift, gamma=args.gamma,
                                gamma_img=args.gamma_img, renorm=args.renorm == "on")
    image = sample(params, caption, args.height, args.width, sampler_cfg,
                   RandomStream.from_seed(args.seed), cfg.noise_config())
    write_ppm(args.out, image)
    print(f"wrote {args.out} ({args.width}x{args.height}, steps={args.steps}, "
          f"shift={args.shift}, gamma={args.gamma}, gamma_img={args.gamma_img})")
    return 0


def _cmd_verify(args) -> int:
    from .verify import format_report, run_invariant_suite

    results = run_invariant_suite(name_filter=args.filter)
    sys.stdout.write(format_report(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} invariants passed")
    return 1 if failed else 0


def _parse_layout(text: str):
    from . import attention as attn

    layout = []
    for item in text.split(","):
        item = item.strip().lower()
        if item.startswith("t"):
            layout.append(attn.Text(int(item[1:])))
        elif item.startswith(("i", "n")):
            rows, cols = item[1:].split("x")
            cls = attn.CleanImage if item[0] == "i" else attn.NoiseImage
            layout.append(cls(int(rows), int(cols)))
        else:
            raise ValueError(f"bad layout item {item!r} (want tN, iRxC, or nRxC)")
    return layout


def _cmd_bench(args) -> int:
    import numpy as np

    from . import attention as attn
    from .rng import RandomStream

    layout = _parse_layout(args.layout)
    n = attn.layout_token_count(layout)
    print(f"layout {args.layout}: {n} tokens")
    plan = attn.build_block_plan(layout, args.bm)
    print(f"image_token_end={plan.image_token_end} block_size={plan.block_size}")
    for i, blk in enumerate(plan.blocks):
        kind = "image-extended" if blk.extended else "causal-fast-path"
        print(f"block {i} rows [{blk.start},{blk.end}) {kind} key_end={blk.key_end}")
    g = RandomStream.from_seed(args.seed)._generator()
    q, k, v = (g.standard_normal((n, args.head_dim)) for _ in range(3))
    mask = attn.build_mask(layout)
    cutoffs = attn.row_cutoffs(layout)

    t0 = time.perf_counter()
    ref = attn.attend_reference(q, k, v, mask, args.head_dim ** -0.5)
    t_ref = time.perf_counter() - t0
    t0 = time.perf_counter()
    blocked, stats = attn.attend_blocked(q, k, v, plan, cutoffs)
    t_blk = time.perf_counter() - t0
    print(f"skipped_key_blocks={stats.skipped_key_blocks} of {stats.total_key_blocks}")
    print(f"reference_seconds={t_ref:.6f} blocked_seconds={t_blk:.6f}")
    print(f"max_abs_diff={float(np.abs(ref - blocked).max()):.3e}")
    return 0


def _cmd_reward(args) -> int:
    from .rewards import HashScorer, composite_reward, ocr_iou, style_score_map, tokenize

    root = Path(args.dir)
    stems = sorted(p.stem for p in root.glob("*.ppm"))
    if not stems:
        print(f"error: no .ppm images under {root}", file=sys.stderr)
        return 2
    scorer = HashScorer()
    for stem in stems:
        prompt = (root / f"{stem}.prompt.txt").read_text(encoding="utf-8").strip()
        ref = (root / f"{stem}.ref.txt").read_text(encoding="utf-8").strip()
        ocr_path = root / f"{stem}.ocr.txt"
        extracted = ocr_path.read_text(encoding="utf-8").strip() if ocr_path.exists() else ""
        r_ocr = ocr_iou(tokenize(extracted), tokenize(ref))
        judged = scorer.score(str(root / f"{stem}.ppm"), prompt, "style")
        r_sty = style_score_map(int(judged.score)) if judged.valid else 0.0
        reward = composite_reward(r_ocr, r_sty, args.lambda_sty)
        print(f"{stem} r_ocr={r_ocr:.4f} r_sty={r_sty:.4f} r={reward:.4f} "
              f"valid={int(judged.valid)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixelmot",
        description="Desk-scale unified multimodal transformer toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the synthetic dataset")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sample", help="generate an image from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt-file", required=True, help="whitespace-separated vocab words")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--shift", type=float, default=3.0)
    p.add_argument("--gamma", type=float, default=4.0)
    p.add_argument("--gamma-img", type=float, default=1.0)
    p.add_argument("--renorm", choices=("on", "off"), default="on")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ema", action="store_true", help="sample from the EMA shadow")
    p.add_argument("--out", required=True, help="output PPM path")
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--filter", default=None, help="run only checks with this prefix")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("bench", help="report block-plan classes and timings")
    p.add_argument("--layout", required=True, help="e.g. t8,i2x2,t4")
    p.add_argument("--bm", type=int, default=4, help="M-block size")
    p.add_argument("--head-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("reward", help="score a directory of generation triples")
    p.add_argument("--dir", required=True,
                   help="directory of <stem>.ppm/.prompt.txt/.ref.txt (+ optional .ocr.txt)")
    p.add_argument("--lambda-sty", type=float, default=0.5)
    p.set_defaults(fn=_cmd_reward)
    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
