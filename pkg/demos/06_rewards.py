"""Post-training reward arithmetic, with external judges stubbed.

Text-rendering accuracy is a multiset IoU over token counts; style judgments
come back as discrete 1-4 scores mapped onto [0,1]; the composite reward is
r_ocr + 0.5 * r_sty. Resolution candidates fade in by difficulty over a
warmup ramp, and two reward groups alternate by epoch parity.
"""

import numpy as np

from pixelmot.rewards import (
    HashScorer,
    ResolutionCandidate,
    composite_reward,
    difficulty_score,
    ocr_iou,
    reward_group_for_epoch,
    style_score_map,
    tokenize,
    warmup_gate,
)

pred = tokenize("GRAND opening grand sale")
ref = tokenize("grand opening sale today")
print(f"OCR multiset IoU('grand opening grand sale', 'grand opening sale today') "
      f"= {ocr_iou(pred, ref):.4f}")
print(f"  intersection counts min, union counts max; identical -> "
      f"{ocr_iou(ref, ref):.1f}, disjoint -> {ocr_iou(tokenize('x'), tokenize('y')):.1f}")

print("\nstyle score mapping s in {1,2,3,4} -> [0,1]:",
      [round(style_score_map(s), 3) for s in (1, 2, 3, 4)])
print(f"composite with lambda_sty=0.5: r_ocr=0.6, r_sty=0.8 -> "
      f"{composite_reward(0.6, 0.8, 0.5):.2f}")

# difficulty from area + aspect extremity over the candidate set
dims = [(1536, 1536), (2048, 2048), (1536, 864), (2048, 1152), (864, 1536)]
print("\ndifficulty scores over the candidate set:")
candidates = []
for h, w in dims:
    d = difficulty_score(h, w, dims)
    candidates.append(ResolutionCandidate(f"{h}x{w}", h, w, 1.0 / len(dims), d))
    print(f"  {h:4d}x{w:<4d} d = {d:.3f}")

print("\nwarmup gating (E_warm=10, delta=0.3): sampling probabilities by epoch")
print("  epoch  " + "  ".join(f"{c.label:>9s}" for c in candidates))
for epoch in (0, 2, 4, 6, 8, 10):
    probs = warmup_gate(candidates, epoch, 10, 0.3)
    print(f"  {epoch:5d}  " + "  ".join(f"{p:9.4f}" for p in probs))
print("  (at e >= E_warm the base probabilities return exactly)")

print("\nreward group interleaving:",
      {e: reward_group_for_epoch(e).name for e in range(4)})

scorer = HashScorer()
resp = scorer.score("/tmp/pixelmot_sample.ppm", "a red square, poster style", "style")
print(f"\nstub judge (deterministic from input hash): style score {resp.score:.0f} "
      f"-> r_sty {style_score_map(int(resp.score)):.3f} (valid={resp.valid})")
