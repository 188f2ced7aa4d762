"""Render the procedural toy lesions and build a labeled dataset.

Every image is determined by six factors (size, pigment, skin tone,
eccentricity, position, texture seed), so downstream stages can be checked
against known ground truth. This script renders a factor sweep, writes a
small stratified dataset, and prints the pixel-count oracle that later
scripts use to identify the "size" direction.
"""

import pathlib

import numpy as np

from latentaug.data import (
    ToyBlobParams,
    ToyClassSpec,
    lesion_pixel_count,
    make_toy_dataset,
    render_toy_blob,
    save_image,
)

out = pathlib.Path(__file__).parent / "out" / "01_toy_dataset"
out.mkdir(parents=True, exist_ok=True)

# one row per factor: sweep it while holding the others fixed
base = dict(lesion_radius=0.2, lesion_pigment=0.7, skin_tone=0.35,
            eccentricity=0.15, center_offset=(0.0, 0.0), texture_seed=11)
sweeps = {
    "lesion_radius": [0.05, 0.12, 0.20, 0.28, 0.36],
    "lesion_pigment": [0.2, 0.4, 0.6, 0.8, 1.0],
    "skin_tone": [0.1, 0.3, 0.5, 0.7, 0.9],
    "eccentricity": [0.0, 0.2, 0.4, 0.6, 0.8],
}
for factor, values in sweeps.items():
    row = []
    for v in values:
        params = ToyBlobParams(**{**base, factor: v})
        row.append(render_toy_blob(params, 64).pixels)
    save_image(np.concatenate(row, axis=1), out / f"sweep_{factor}.png")
print(f"factor sweep strips -> {out}")

# the pixel-count oracle is monotone in radius, which scripts 03/06 exploit
for radius in (0.1, 0.2, 0.3):
    img = render_toy_blob(ToyBlobParams(**{**base, "lesion_radius": radius}), 64)
    print(f"  radius {radius:.1f} -> lesion_pixel_count {lesion_pixel_count(img.pixels)}")

# a small two-class dataset: faint vs dark lesions
classes = {
    "faint-lesion": ToyClassSpec(lesion_pigment=(0.30, 0.50)),
    "dark-lesion": ToyClassSpec(lesion_pigment=(0.65, 0.95)),
}
manifest = make_toy_dataset(30, classes, seed=0, out_dir=out / "dataset", resolution=64)
splits = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
print(f"dataset: {len(manifest.entries)} images, splits {splits}")
print(f"manifest -> {out / 'dataset' / 'manifest.jsonl'}")
