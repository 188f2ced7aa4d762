"""Synthetic training-set production with provenance and two-stage filtering.

Every synthetic image comes from inverting a real training image, pushing
its latent along one curated direction at a sampled magnitude, and
re-synthesizing. The synthetic inherits the source label. Each record
carries the perceptual distance between the edited image and the unedited
reconstruction of its source (so a magnitude-0 edit scores exactly 0), a
fidelity verdict against the plan threshold, and later a classifier
verdict.

Filtering follows the two mechanisms used to keep only "good" synthetics:
a perceptual-distance threshold (applied per transformation by default,
per image optionally) and agreement of a classifier trained on unfiltered
augmented data with the inherited label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, ManifestEntry, load_image, save_image
from .factorization import SemanticDirection, apply_direction
from .gan.checkpoint import GanCheckpoint
from .gan.networks import Generator
from .gan.ops import synthesize
from .inversion import Encoder, Hypernet, invert
from .metrics import DeskEmbedder, lpips

__all__ = [
    "AugmentationError",
    "AugmentationPlan",
    "AugmentationRecord",
    "generate_augmented_set",
    "filter_by_lpips",
    "filter_by_classifier",
    "compose_training_set",
    "save_records",
    "load_records",
]


class AugmentationError(ValueError):
    pass


@dataclass
class AugmentationPlan:
    """What to generate: directions, magnitude law, counts, fidelity threshold.

    Magnitudes are uniform over [-max_magnitude, max_magnitude] with a dead
    zone excluding |m| < max_magnitude * dead_zone so near-duplicates of the
    source are not produced.
    """

    direction_ids: list[int]
    per_transformation_count: int
    max_magnitude: float = 4.0
    dead_zone: float = 0.25
    lpips_threshold: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.direction_ids:
            raise AugmentationError("plan needs at least one direction")
        if self.per_transformation_count < 1:
            raise AugmentationError("per_transformation_count must be >= 1")
        if self.lpips_threshold <= 0:
            raise AugmentationError("lpips_threshold must be positive")
        if not 0.0 <= self.dead_zone < 1.0:
            raise AugmentationError("dead_zone must be in [0, 1)")

    def sample_magnitude(self, rng: np.random.Generator) -> float:
        lo = self.max_magnitude * self.dead_zone
        mag = float(rng.uniform(lo, self.max_magnitude))
        return mag if rng.uniform() < 0.5 else -mag

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPlan":
        return cls(**d)


@dataclass
class AugmentationRecord:
    """Provenance of one synthetic image."""

    synthetic_id: str
    source_id: str
    direction_id: int
    magnitude: float
    inherited_label: int
    lpips_to_source: float
    fidelity_pass: bool
    classifier_pass: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationRecord":
        return cls(**d)


def save_records(records: list[AugmentationRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")
    return path


def load_records(path: str | Path) -> list[AugmentationRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(AugmentationRecord.from_dict(json.loads(line)))
    return records


def _resolve_generator(checkpoint: GanCheckpoint | Generator) -> Generator:
    if isinstance(checkpoint, Generator):
        return checkpoint
    return checkpoint.build_generator("ema")


def generate_augmented_set(
    manifest: DatasetManifest,
    plan: AugmentationPlan,
    directions: list[SemanticDirection],
    encoder: Encoder,
    checkpoint: GanCheckpoint | Generator,
    out_dir: str | Path,
    hypernet: Hypernet | None = None,
    refine_steps: int = 5,
    embedder=None,
    magnitude_override: float | None = None,
) -> list[AugmentationRecord]:
    """Produce per_transformation_count synthetics for every plan direction.

    Sources are drawn from the train split (each source exactly once when
    the count equals the split size). Inversions are computed once per
    source and reused across directions. Failed inversions are skipped, not
    fatal. Deterministic for a fixed (plan, model states).

    ``magnitude_override`` is a test hook forcing every edit magnitude.
    """
    by_status = [d for d in directions if d.status != "relevant"]
    if by_status or not directions:
        raise AugmentationError("all plan directions must be curated as relevant")
    by_index = {d.index: d for d in directions}
    missing = [i for i in plan.direction_ids if i not in by_index]
    if missing:
        raise AugmentationError(f"plan references uncurated directions: {missing}")

    generator = _resolve_generator(checkpoint)
    embedder = embedder or DeskEmbedder()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    train_entries = manifest.split("train")
    if not train_entries:
        raise AugmentationError("manifest has no train split")

    rng = np.random.default_rng(plan.seed)
    inversions: dict[str, tuple | None] = {}
    records: list[AugmentationRecord] = []
    skipped: list[str] = []

    for direction_id in plan.direction_ids:
        direction = by_index[direction_id]
        picks = _pick_sources(train_entries, plan.per_transformation_count, rng)
        for entry in picks:
            if entry.path not in inversions:
                try:
                    image = load_image(manifest.resolve(entry), manifest.resolution)
                    inv = invert(
                        image, encoder, generator, hypernet=hypernet, steps=refine_steps,
                        embedder=embedder,
                    )
                    recon = synthesize(
                        generator, inv.latent, weight_offsets=inv.weight_offsets or None
                    ).pixels
                    inversions[entry.path] = (inv, recon)
                except Exception:
                    skipped.append(entry.path)
                    inversions[entry.path] = None
            cached = inversions[entry.path]
            if cached is None:
                continue
            inv, recon = cached
            magnitude = (
                plan.sample_magnitude(rng)
                if magnitude_override is None
                else float(magnitude_override)
            )
            edited = apply_direction(inv.latent, direction, magnitude)
            synth = synthesize(
                generator, edited, weight_offsets=inv.weight_offsets or None
            ).pixels
            score = lpips(synth, recon, embedder).value
            synthetic_id = f"syn_d{direction_id}_{len(records):06d}"
            save_image(synth, out_dir / "images" / f"{synthetic_id}.png")
            records.append(
                AugmentationRecord(
                    synthetic_id=synthetic_id,
                    source_id=entry.path,
                    direction_id=direction_id,
                    magnitude=magnitude,
                    inherited_label=entry.label,
                    lpips_to_source=score,
                    fidelity_pass=score <= plan.lpips_threshold,
                )
            )

    save_records(records, out_dir / "records.jsonl")
    (out_dir / "plan.json").write_text(
        json.dumps({"plan": plan.to_dict(), "skipped_sources": skipped}, indent=2)
    )
    return records


def _pick_sources(entries: list[ManifestEntry], count: int, rng: np.random.Generator):
    n = len(entries)
    if count <= n:
        idx = rng.choice(n, size=count, replace=False)
    else:
        reps = np.tile(np.arange(n), count // n)
        extra = rng.choice(n, size=count - reps.size, replace=False)
        idx = np.concatenate([reps, extra])
    return [entries[int(i)] for i in idx]


def filter_by_lpips(
    records: list[AugmentationRecord],
    threshold: float,
    mode: str = "per_transformation",
) -> tuple[list[AugmentationRecord], list[AugmentationRecord]]:
    """Partition records by perceptual fidelity.

    per_transformation (default): a direction is kept or dropped wholesale
    by its mean score. per_image: each record judged on its own score.
    """
    if mode not in ("per_transformation", "per_image"):
        raise AugmentationError(f"unknown filter mode {mode!r}")
    kept: list[AugmentationRecord] = []
    rejected: list[AugmentationRecord] = []
    if mode == "per_image":
        for r in records:
            (kept if r.lpips_to_source <= threshold else rejected).append(r)
        return kept, rejected
    groups: dict[int, list[AugmentationRecord]] = {}
    for r in records:
        groups.setdefault(r.direction_id, []).append(r)
    for direction_id, group in groups.items():
        mean = float(np.mean([r.lpips_to_source for r in group]))
        (kept if mean <= threshold else rejected).extend(group)
    return kept, rejected


def filter_by_classifier(
    records: list[AugmentationRecord],
    model,
    images_dir: str | Path,
    resolution: int,
    batch_size: int = 64,
) -> tuple[list[AugmentationRecord], list[AugmentationRecord]]:
    """Keep synthetics the model classifies as their inherited label.

    Sets ``classifier_pass`` on every record. The model is expected to be
    the matching-size classifier trained on the unfiltered augmented set.
    """
    from .classifier import predict_scores

    images_dir = Path(images_dir)
    if not records:
        return [], []
    images = np.stack(
        [load_image(images_dir / f"{r.synthetic_id}.png", resolution) for r in records]
    )
    preds = predict_scores(model, images, batch_size=batch_size).argmax(axis=1)
    kept, rejected = [], []
    for r, p in zip(records, preds):
        r.classifier_pass = bool(p == r.inherited_label)
        (kept if r.classifier_pass else rejected).append(r)
    return kept, rejected


def compose_training_set(
    manifest: DatasetManifest,
    kept_records: list[AugmentationRecord],
    n_augment: int,
    seed: int,
    images_dir: str | Path,
) -> DatasetManifest:
    """Original manifest plus n_augment synthetics, stratified per direction.

    Selections are drawn independently per call (different n_augment values
    are not nested). Synthetic entries join the train split only; val and
    test are returned untouched.
    """
    if n_augment == 0:
        return DatasetManifest(
            entries=list(manifest.entries),
            class_names=list(manifest.class_names),
            resolution=manifest.resolution,
            root=manifest.root,
        )
    groups: dict[int, list[AugmentationRecord]] = {}
    for r in kept_records:
        groups.setdefault(r.direction_id, []).append(r)
    n_dirs = len(groups)
    if n_dirs == 0:
        raise AugmentationError("no kept records to compose from")
    if n_augment % n_dirs != 0:
        raise AugmentationError(
            f"n_augment={n_augment} not divisible by {n_dirs} directions"
        )
    quota = n_augment // n_dirs
    rng = np.random.default_rng(seed)
    images_dir = Path(images_dir)
    new_entries = list(manifest.entries)
    for direction_id in sorted(groups):
        group = groups[direction_id]
        if len(group) < quota:
            raise AugmentationError(
                f"insufficient records for direction {direction_id}: "
                f"{len(group)} < {quota}"
            )
        picks = rng.choice(len(group), size=quota, replace=False)
        for i in picks:
            record = group[int(i)]
            rel = _relative_path(images_dir / f"{record.synthetic_id}.png", manifest.root)
            new_entries.append(
                ManifestEntry(path=rel, label=record.inherited_label, split="train")
            )
    composed = DatasetManifest(
        entries=new_entries,
        class_names=list(manifest.class_names),
        resolution=manifest.resolution,
        root=manifest.root,
    )
    composed.validate(check_files=True)
    return composed


def _relative_path(target: Path, root: Path) -> str:
    import os

    return os.path.relpath(Path(target).resolve(), Path(root).resolve())
