"""The two evaluation metrics and their checkable properties.

Frechet distance between Gaussian feature fits has closed forms for
1-D Gaussians, which the implementation reproduces to eight decimals; the
perceptual pair distance is exactly zero on identical images, symmetric,
and monotone under growing corruption.
"""

import numpy as np

from latentaug.data import ToyBlobParams, render_toy_blob
from latentaug.metrics import (
    DeskEmbedder,
    GaussianFit,
    fid,
    frechet_distance,
    lpips,
)

embedder = DeskEmbedder()

# closed-form checks: d2(N(0,1), N(1,1)) = 1 and d2(N(0,1), N(0,4)) = 1
shift = frechet_distance(
    GaussianFit(np.array([0.0]), np.array([[1.0]]), 10),
    GaussianFit(np.array([1.0]), np.array([[1.0]]), 10),
)
scale = frechet_distance(
    GaussianFit(np.array([0.0]), np.array([[1.0]]), 10),
    GaussianFit(np.array([0.0]), np.array([[4.0]]), 10),
)
print(f"Frechet closed forms: mean shift {shift:.10f}, variance change {scale:.10f}")

rng = np.random.default_rng(0)
images = []
for _ in range(24):
    images.append(
        render_toy_blob(
            ToyBlobParams(
                lesion_radius=float(rng.uniform(0.1, 0.3)),
                lesion_pigment=float(rng.uniform(0.4, 0.9)),
                skin_tone=float(rng.uniform(0.2, 0.7)),
                texture_seed=int(rng.integers(0, 2**31 - 1)),
            ),
            32,
        ).pixels
    )

print(f"fid(X, X) = {fid(images, images, embedder):.2e}")
noise = rng.normal(size=np.stack(images).shape).astype(np.float32)
for amp in (0.2, 0.5, 1.0):
    noisy = [np.clip(im + amp * nz, -1, 1) for im, nz in zip(images, noise)]
    print(f"fid(X, X + {amp:.1f} noise) = {fid(images, noisy, embedder):.3f}")

a, b = images[0], images[1]
print(f"lpips(a, a) = {lpips(a, a, embedder).value}")
print(f"lpips symmetry gap = "
      f"{abs(lpips(a, b, embedder).value - lpips(b, a, embedder).value):.2e}")
score = lpips(a, b, embedder)
print(f"lpips(a, b) = {score.value:.4f} with per-layer terms "
      f"{[round(v, 4) for v in score.per_layer]}")
pattern = rng.normal(size=a.shape).astype(np.float32)
print("lpips under growing corruption:",
      [round(lpips(a, np.clip(a + amp * pattern, -1, 1), embedder).value, 4)
       for amp in (0.05, 0.15, 0.4)])
