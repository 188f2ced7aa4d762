"""Filtered synthetic augmentation and the classifier gain it buys.

Builds a classification task whose test backgrounds extend beyond the
training range, curates label-preserving directions, produces synthetics
with inherited labels, applies both filters (perceptual threshold per
transformation, then classifier agreement), and compares seed-averaged
balanced accuracy against the baseline.

Expects demos 02-04 to have run (GAN + encoder + hypernet).
"""

import pathlib

import numpy as np

from latentaug.augment import (
    AugmentationPlan,
    compose_training_set,
    filter_by_classifier,
    filter_by_lpips,
    generate_augmented_set,
)
from latentaug.classifier import (
    ClassifierConfig,
    TrainSpec,
    ablation_table_csv,
    evaluate,
    run_ablation,
    train_classifier,
)
from latentaug.data import (
    DatasetManifest,
    ManifestEntry,
    ToyBlobParams,
    render_toy_blob,
    save_image,
    save_manifest,
)
from latentaug.factorization import (
    apply_direction,
    build_weight_matrix,
    factorize,
    rank_directions,
)
from latentaug.gan import GanCheckpoint, LatentCode, map_latent, synthesize
from latentaug.inversion import load_encoder, load_hypernet

out = pathlib.Path(__file__).parent / "out" / "06_augmentation"
out.mkdir(parents=True, exist_ok=True)
gan_dir = out.parent / "02_gan"
inv_dir = out.parent / "04_inversion"
for needed in (gan_dir / "gan.npz", inv_dir / "encoder.npz", inv_dir / "hypernet.npz"):
    if not needed.exists():
        raise SystemExit(f"missing {needed}; run demos 02 and 04 first")

checkpoint = GanCheckpoint.load(gan_dir / "gan.npz")
generator = checkpoint.build_generator("ema")
encoder = load_encoder(inv_dir / "encoder.npz")
hypernet = load_hypernet(inv_dir / "hypernet.npz")

# task: label = lesion pigment (wide gap); training covers light skin only,
# the test set the full tone range
PIGMENT = {"faint": (0.25, 0.40), "dark": (0.70, 0.85)}


def build_task(task_dir: pathlib.Path) -> DatasetManifest:
    rng = np.random.default_rng(23)
    (task_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    for label, cname in enumerate(PIGMENT):
        for split, n in (("train", 60), ("val", 10), ("test", 30)):
            skin = (0.15, 0.35) if split != "test" else (0.15, 0.75)
            for i in range(n):
                params = ToyBlobParams(
                    lesion_radius=float(rng.uniform(0.10, 0.22)),
                    lesion_pigment=float(rng.uniform(*PIGMENT[cname])),
                    skin_tone=float(rng.uniform(*skin)),
                    eccentricity=float(rng.uniform(0.0, 0.35)),
                    center_offset=(float(rng.uniform(-0.12, 0.12)),
                                   float(rng.uniform(-0.12, 0.12))),
                    texture_seed=int(rng.integers(0, 2**31 - 1)),
                )
                rel = f"images/{cname}_{split}_{i:04d}.png"
                save_image(render_toy_blob(params, 32).pixels, task_dir / rel)
                entries.append(ManifestEntry(rel, label, split))
    manifest = DatasetManifest(entries, list(PIGMENT), 32, task_dir)
    save_manifest(manifest, task_dir / "manifest.jsonl")
    return manifest


task = build_task(out / "task")

# curation stand-in for the review dashboard: among the ten strongest
# directions keep five that move the background a lot and the lesion little
result = factorize(build_weight_matrix(checkpoint))
rng = np.random.default_rng(0)
probes = [map_latent(generator, LatentCode("Z", rng.normal(size=32).astype(np.float32)))
          for _ in range(8)]
ranking = rank_directions(result, generator, probes, magnitude=3.0, metric="pixel")


def region_intensities(img):
    intensity = img.mean(axis=2)
    lo, med = intensity.min(), float(np.median(intensity))
    mask = intensity < lo + 0.5 * (med - lo)
    if mask.sum() < 4:
        return float(intensity.mean()), float(intensity.mean())
    return float(intensity[mask].mean()), float(intensity[~mask].mean())


scores = {}
for row in ranking[:10]:
    direction = result.direction(row["index"])
    lesion_shift, bg_shift = [], []
    for probe in probes:
        bl, bb = region_intensities(synthesize(generator, probe).pixels)
        for m in (-2.0, 2.0):
            el, eb = region_intensities(
                synthesize(generator, apply_direction(probe, direction, m)).pixels)
            lesion_shift.append(abs(el - bl))
            bg_shift.append(abs(eb - bb))
    scores[row["index"]] = np.mean(bg_shift) - np.mean(lesion_shift)
curated = sorted(scores, key=lambda i: -scores[i])[:5]
print(f"curated directions (background movers): {curated}")

directions = []
for i in curated:
    d = result.direction(i)
    d.status = "relevant"
    directions.append(d)

plan = AugmentationPlan(direction_ids=curated, per_transformation_count=120,
                        max_magnitude=4.0, lpips_threshold=0.8, seed=7)
records = generate_augmented_set(task, plan, directions, encoder, generator,
                                 out / "aug", hypernet=hypernet, refine_steps=3)
print(f"generated {len(records)} synthetics "
      f"(mean perceptual distance {np.mean([r.lpips_to_source for r in records]):.3f})")

kept, dropped = filter_by_lpips(records, plan.lpips_threshold, mode="per_transformation")
print(f"perceptual filter: kept {len(kept)}, dropped {len(dropped)}")

config = ClassifierConfig(n_classes=2, width=16, dropout=0.1)
spec = TrainSpec(lr=1e-3, weight_decay=1e-4, max_epochs=20, patience=6, batch_size=16)

# the matching-size unfiltered model screens synthetics it would mislabel
unfiltered = compose_training_set(task, kept, 400, seed=1, images_dir=out / "aug" / "images")
unfiltered_model, _ = train_classifier(unfiltered, config, spec, seed=0)
filtered, rejected = filter_by_classifier(kept, unfiltered_model, out / "aug" / "images", 32)
print(f"classifier filter: kept {len(filtered)}, rejected {len(rejected)}")

per_dir = {}
for r in filtered:
    per_dir[r.direction_id] = per_dir.get(r.direction_id, 0) + 1
n_augment = min(350, min(per_dir.values()) * len(per_dir))
n_augment -= n_augment % len(per_dir)
augmented = compose_training_set(task, filtered, n_augment, seed=1,
                                 images_dir=out / "aug" / "images")

table = run_ablation(task, {f"sa-{n_augment}-filter": augmented}, config, spec,
                     seeds=[0, 1, 2])
print()
print(ablation_table_csv(table))
