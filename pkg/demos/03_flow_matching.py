"""The pixel-space flow objective, step by step.

A training draw interpolates z_t = t*x + (1-t)*sigma_R*eps between scaled
Gaussian noise (t=0) and the clean image (t=1). The noise scale sigma_R
grows with the square root of the token count, so a 4x larger image gets 2x
larger terminal noise and per-token SNR stays put. The model predicts the
clean image; converting through (xhat - z_t)/(1-t) turns that into a
velocity whose MSE against (x - z_t)/(1-t) is the generation loss.
"""

import numpy as np

from pixelmot import autodiff as ad
from pixelmot.flow import (
    LossWeights,
    NoiseScaleConfig,
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
from pixelmot.rng import RandomStream

cfg = NoiseScaleConfig(sigma0=1.0, n0=64.0, sigma_max=8.0)
print("resolution-adaptive noise scale (sigma0=1, N0=64):")
for hw in (256, 512, 1024, 2048):
    n = hw * hw // 1024
    print(f"  {hw:5d}^2  ->  N={n:5d} tokens, sigma_R = {noise_scale(hw, hw, cfg):.3f}")

rng = RandomStream.from_seed(7)
ts = []
for _ in range(20000):
    t, rng = sample_t(rng, mu=-0.8, sigma=0.8)
    ts.append(t)
print(f"\nlogit-normal t-sampler: mean={np.mean(ts):.4f}, "
      f"min={min(ts):.4f}, max={max(ts):.4f} (always strictly inside (0,1))")

g = np.random.default_rng(0)
x = np.clip(g.standard_normal((3, 8, 8)) * 0.5, -1, 1)
eps = g.standard_normal((3, 8, 8))
sigma_r = 1.0
print("\ninterpolant endpoints are exact:")
print(f"  z_0 == sigma*eps: {np.array_equal(interpolate(x, eps, 0.0, sigma_r), sigma_r * eps)}")
print(f"  z_1 == x:         {np.array_equal(interpolate(x, eps, 1.0, sigma_r), x)}")

print("\ntarget velocity t-invariance (always x - sigma*eps):")
for t in (0.1, 0.5, 0.9):
    z = interpolate(x, eps, t, sigma_r)
    v_star = target_velocity(x, z, t)
    print(f"  t={t}: max |v* - (x - sigma*eps)| = {np.abs(v_star - (x - sigma_r * eps)).max():.2e}")

z = interpolate(x, eps, 0.4, sigma_r)
v_perfect = xpred_to_velocity(x, z, 0.4)
print(f"\nperfect prediction gives zero loss: "
      f"{float(ad.value_of(gen_loss(np.asarray(v_perfect), target_velocity(x, z, 0.4)))):.2e}")

# the joint objective weights text cross-entropy 0.1 against velocity MSE 1.0
ce = text_loss(np.zeros((3, 16)), np.array([4, 7, 1]))  # uniform -> ln 16
mse = gen_loss(np.asarray(v_perfect) + 0.3, target_velocity(x, z, 0.4))
total = total_loss(ce, mse, LossWeights(0.1, 1.0))
print(f"\ntext CE (uniform over 16) = {float(ad.value_of(ce)):.4f} = ln 16")
print(f"velocity MSE = {float(ad.value_of(mse)):.4f}")
print(f"total = 0.1*CE + 1.0*MSE = {float(ad.value_of(total)):.4f}")

counts = {"both": 0, "image only": 0, "none": 0}
for _ in range(10000):
    flags, rng = drop_conditions(rng, 0.10, 0.10)
    key = ("both" if flags.text_present
           else "image only" if flags.image_context_present else "none")
    counts[key] += 1
print(f"\ncondition dropout over 10k draws (expect ~80/10/10): {counts}")
