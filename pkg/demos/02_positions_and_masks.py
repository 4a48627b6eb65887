"""How one mixed sequence is laid out, positioned, and masked.

Text advances along a temporal axis; all patches of one image share a
single temporal step and carry (row, col) spatial indices. The attention
mask keeps text causal, lets image tokens see their whole block, and hides
noise tokens from every clean token. For serving, the same rules compile to
one key range per M-block of query rows, with a causal fast path for
text-only blocks.
"""

import numpy as np

from pixelmot.attention import (
    CleanImage,
    NoiseImage,
    Text,
    attend_blocked,
    attend_reference,
    build_block_plan,
    build_mask,
    layout_token_count,
    row_cutoffs,
)
from pixelmot.rope import PositionTriple, RopeConfig, apply_rope, assign_positions

layout = [Text(3), CleanImage(2, 2), NoiseImage(2, 2)]
print("layout: Text(3) + CleanImage(2x2) + NoiseImage(2x2)")

positions = assign_positions(layout)
print("\n(t, h, w) per token:")
print(positions.T)

mask = build_mask(layout)
print("\nallow-matrix (rows: queries, cols: keys; X = attend):")
for i, row in enumerate(mask):
    print(f"  {i:2d} " + "".join("X" if a else "." for a in row))
print("note: no clean row (0-6) ever reads a noise column (7-10)")

# rotations preserve norms and depend only on relative offsets
cfg = RopeConfig()
v = np.random.default_rng(0).standard_normal(cfg.head_size)
r1 = apply_rope(v, PositionTriple(2, 1, 0), cfg)
r2 = apply_rope(v, PositionTriple(12, 1, 0), cfg)
print(f"\nrotary norms: |v|={np.linalg.norm(v):.6f} "
      f"|R(v)|={np.linalg.norm(r1):.6f} (preserved)")
q, k = (np.random.default_rng(s).standard_normal(16) for s in (1, 2))
dot_a = apply_rope(q, PositionTriple(3, 0, 0), cfg) @ apply_rope(k, PositionTriple(1, 0, 0), cfg)
dot_b = apply_rope(q, PositionTriple(8, 0, 0), cfg) @ apply_rope(k, PositionTriple(6, 0, 0), cfg)
print(f"relative-position check: <q3,k1>={dot_a:.12f} == <q8,k6>={dot_b:.12f}")

# serving-time plan over the clean prefix only
clean = [Text(6), CleanImage(1, 2), Text(2)]
plan = build_block_plan(clean, block_size=4)
print(f"\nserving plan for Text(6)+Image(1x2)+Text(2), Bm=4 "
      f"(image span ends at {plan.image_token_end}):")
for i, blk in enumerate(plan.blocks):
    kind = "image-extended" if blk.extended else "causal-fast-path"
    print(f"  block {i}: rows [{blk.start},{blk.end}) {kind:18s} keys [0,{blk.key_end})")

n = layout_token_count(clean)
g = np.random.default_rng(3)
q, k, v = (g.standard_normal((n, 8)) for _ in range(3))
ref = attend_reference(q, k, v, build_mask(clean), 8 ** -0.5)
out, stats = attend_blocked(q, k, v, plan, row_cutoffs(clean))
print(f"blocked vs dense reference: max |diff| = {np.abs(out - ref).max():.2e}; "
      f"skipped {stats.skipped_key_blocks}/{stats.total_key_blocks} key tiles")
