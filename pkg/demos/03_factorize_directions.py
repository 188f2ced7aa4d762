"""Closed-form direction discovery: SVD of the style-modulation weights.

Stacks the style-affine matrices of all synthesis convs, factorizes them,
ranks the resulting directions by how much they change generated images,
and renders a magnitude sweep strip per top direction. One of the leading
directions should visibly control lesion size; the pixel-count oracle makes
that quantitative.
"""

import pathlib

import numpy as np

from latentaug.data import lesion_pixel_count, save_image
from latentaug.factorization import (
    apply_direction,
    build_weight_matrix,
    factorize,
    rank_directions,
)
from latentaug.gan import GanCheckpoint, LatentCode, map_latent, synthesize

out = pathlib.Path(__file__).parent / "out" / "03_factorization"
out.mkdir(parents=True, exist_ok=True)
ckpt_path = out.parent / "02_gan" / "gan.npz"
if not ckpt_path.exists():
    raise SystemExit("run demos/02_train_gan.py first")

checkpoint = GanCheckpoint.load(ckpt_path)
generator = checkpoint.build_generator("ema")

weight_matrix = build_weight_matrix(checkpoint, layer_range="all", normalization="row_l2")
result = factorize(weight_matrix)
print(f"weight matrix {weight_matrix.matrix.shape}; "
      f"top singular values {np.round(result.singular_values[:6], 3).tolist()}")
result.save(out / "factorization.npz")

rng = np.random.default_rng(0)
probes = [
    map_latent(generator, LatentCode("Z", rng.normal(size=32).astype(np.float32)))
    for _ in range(8)
]
ranking = rank_directions(result, generator, probes, magnitude=3.0, metric="pixel")
print("rank | direction | mean image change")
for row in ranking[:8]:
    print(f"  {ranking.index(row):2d} | {row['index']:2d} | {row['mean_image_change']:.4f}")

# magnitude sweep strips for the top directions, plus the size oracle
magnitudes = [-3.0, -1.5, 0.0, 1.5, 3.0]
probe = probes[0]
for row in ranking[:5]:
    direction = result.direction(row["index"])
    strip, counts = [], []
    for m in magnitudes:
        img = synthesize(generator, apply_direction(probe, direction, m)).pixels
        strip.append(img)
        counts.append(lesion_pixel_count(img))
    save_image(np.concatenate(strip, axis=1), out / f"direction_{row['index']:02d}.png")
    corr = np.corrcoef(magnitudes, counts)[0, 1]
    print(f"direction {row['index']:2d}: lesion pixel counts across sweep {counts} "
          f"(corr with magnitude {corr:+.2f})")
print(f"sweep strips -> {out}")
