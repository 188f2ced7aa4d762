"""End-to-end pipeline runner with resumable stages and provenance tracking.

Stage order: dataset -> gan -> factorization -> inversion (encoder then
hypernet) -> augmentation -> ablation. Each stage writes its artifact into
the workspace, registers it in the artifact store with parent edges, and
updates the job registry. A completed stage is skipped under ``resume``.

Between inversion and augmentation the run pauses for human curation unless
``auto_curate`` marks the top-k ranked directions relevant automatically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .augment import (
    AugmentationPlan,
    compose_training_set,
    filter_by_classifier,
    filter_by_lpips,
    generate_augmented_set,
    load_records,
)
from .classifier import ClassifierConfig, TrainSpec, run_ablation, train_classifier
from .data import ToyClassSpec, load_manifest, make_toy_dataset, save_manifest
from .factorization import FactorizationResult, build_weight_matrix, factorize, rank_directions
from .gan import GanCheckpoint, GanTrainHParams, GeneratorConfig, LatentCode, train_gan
from .inversion import (
    InversionTrainHParams,
    load_encoder,
    load_hypernet,
    save_model,
    train_encoder,
    train_hypernet,
)
from .store import ArtifactStore, CurationState, JobRegistry

__all__ = ["PipelineError", "Workspace", "run_pipeline", "load_config", "STAGES"]

STAGES = ("dataset", "gan", "factorization", "inversion", "augmentation", "ablation")


class PipelineError(RuntimeError):
    pass


class Workspace:
    """Fixed file layout of one pipeline run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.store = ArtifactStore(self.root / "store")
        self.jobs = JobRegistry(self.root / "store" / "jobs.json")

    @property
    def manifest_path(self) -> Path:
        return self.root / "dataset" / "manifest.jsonl"

    @property
    def checkpoint_path(self) -> Path:
        return self.root / "gan.npz"

    @property
    def factorization_path(self) -> Path:
        return self.root / "factorization.npz"

    @property
    def curation_path(self) -> Path:
        return self.root / "curation.json"

    @property
    def encoder_path(self) -> Path:
        return self.root / "encoder.npz"

    @property
    def hypernet_path(self) -> Path:
        return self.root / "hypernet.npz"

    @property
    def augment_dir(self) -> Path:
        return self.root / "augment"

    @property
    def ablation_path(self) -> Path:
        return self.root / "ablation.json"

    def curation(self) -> CurationState:
        result = FactorizationResult.load(self.factorization_path)
        return CurationState(self.curation_path, result.dim)


def load_config(path: str | Path) -> dict:
    config = json.loads(Path(path).read_text())
    if "workspace" not in config:
        raise PipelineError("config must name a workspace directory")
    return config


def _stage_done(ws: Workspace, stage: str) -> bool:
    marker = ws.root / f".{stage}.done"
    return marker.exists()


def _mark_done(ws: Workspace, stage: str) -> None:
    (ws.root / f".{stage}.done").write_text("done\n")


def run_pipeline(
    config: dict | str | Path,
    resume: bool = False,
    auto_curate: int | None = None,
    stop_after: str | None = None,
) -> dict:
    """Execute the pipeline described by ``config``; returns a run summary.

    With ``resume`` stages whose completion markers exist are skipped. The
    run halts with status ``awaiting_curation`` after inversion when no
    direction has been marked relevant and ``auto_curate`` is not given.
    ``stop_after`` ends the run early after the named stage (for testing
    and for staged execution).
    """
    if not isinstance(config, dict):
        config = load_config(config)
    ws = Workspace(config["workspace"])
    summary: dict = {"stages": {}, "workspace": str(ws.root), "status": "running"}
    artifact_ids: dict[str, str] = _known_artifacts(ws)

    for stage in STAGES:
        if resume and _stage_done(ws, stage):
            summary["stages"][stage] = "skipped"
            if stage == stop_after:
                summary["status"] = f"stopped_after_{stage}"
                return summary
            continue
        if stage == "augmentation":
            curation = ws.curation()
            relevant = curation.relevant_indices()
            if not relevant and auto_curate:
                relevant = _auto_curate(ws, curation, auto_curate)
            if not relevant:
                summary["status"] = "awaiting_curation"
                summary["stages"][stage] = "blocked"
                return summary
        ws.jobs.update(stage, "running", message=f"stage {stage}")
        try:
            artifact_id = _STAGE_FNS[stage](ws, config, artifact_ids)
        except Exception as exc:
            ws.jobs.update(stage, "failed", message=str(exc))
            raise
        artifact_ids[stage] = artifact_id
        ws.jobs.update(stage, "done", progress=1.0, artifact_id=artifact_id)
        _mark_done(ws, stage)
        summary["stages"][stage] = artifact_id
        if stage == stop_after:
            summary["status"] = f"stopped_after_{stage}"
            return summary

    summary["status"] = "complete"
    return summary


def _known_artifacts(ws: Workspace) -> dict[str, str]:
    known = {}
    kind_by_stage = {
        "dataset": "dataset",
        "gan": "checkpoint",
        "factorization": "factorization",
        "inversion": "hypernet",
        "augmentation": "records",
        "ablation": "report",
    }
    for stage, kind in kind_by_stage.items():
        entry = ws.store.latest(kind)
        if entry is not None:
            known[stage] = entry.artifact_id
    return known


def _stage_dataset(ws: Workspace, config: dict, ids: dict) -> str:
    spec = config.get("dataset", {})
    if spec.get("kind", "toy") == "manifest":
        import os

        from .data import DatasetManifest, ManifestEntry

        source = load_manifest(spec["path"])
        ws.manifest_path.parent.mkdir(parents=True, exist_ok=True)
        # images stay at the source; entry paths become relative to the copy
        rel = os.path.relpath(source.root, ws.manifest_path.parent)
        manifest = DatasetManifest(
            entries=[
                ManifestEntry(str(Path(rel) / e.path), e.label, e.split)
                for e in source.entries
            ],
            class_names=source.class_names,
            resolution=source.resolution,
            root=ws.manifest_path.parent,
        )
        save_manifest(manifest, ws.manifest_path)
    else:
        classes = {
            name: ToyClassSpec.from_dict(ranges)
            for name, ranges in spec.get(
                "classes", {"faint-lesion": {}, "dark-lesion": {"lesion_pigment": [0.65, 0.95]}}
            ).items()
        }
        make_toy_dataset(
            n_per_class=spec.get("n_per_class", 30),
            class_spec=classes,
            seed=spec.get("seed", 0),
            out_dir=ws.manifest_path.parent,
            resolution=spec.get("resolution", 32),
        )
    return ws.store.register("dataset", ws.manifest_path)


def _stage_gan(ws: Workspace, config: dict, ids: dict) -> str:
    manifest = load_manifest(ws.manifest_path)
    gan_cfg = GeneratorConfig(
        **{**{"resolution": manifest.resolution}, **config.get("gan", {}).get("config", {})}
    )
    hparams = GanTrainHParams(**config.get("gan", {}).get("hparams", {}))
    checkpoint = train_gan(manifest, gan_cfg, hparams)
    checkpoint.save(ws.checkpoint_path)
    return ws.store.register("checkpoint", ws.checkpoint_path, [ids["dataset"]])


def _stage_factorization(ws: Workspace, config: dict, ids: dict) -> str:
    checkpoint = GanCheckpoint.load(ws.checkpoint_path)
    spec = config.get("factorization", {})
    wm = build_weight_matrix(
        checkpoint,
        layer_range=spec.get("layers", "all"),
        normalization=spec.get("normalization", "row_l2"),
    )
    result = factorize(wm, checkpoint_id=ids.get("gan", ""))
    result.save(ws.factorization_path)
    CurationState(ws.curation_path, result.dim)  # initialize the review sheet
    return ws.store.register("factorization", ws.factorization_path, [ids["gan"]])


def _stage_inversion(ws: Workspace, config: dict, ids: dict) -> str:
    manifest = load_manifest(ws.manifest_path)
    checkpoint = GanCheckpoint.load(ws.checkpoint_path)
    hparams = InversionTrainHParams(**config.get("inversion", {}).get("hparams", {}))
    encoder, _ = train_encoder(manifest, checkpoint, hparams)
    save_model(encoder, ws.encoder_path)
    encoder_id = ws.store.register("encoder", ws.encoder_path, [ids["gan"], ids["dataset"]])
    hypernet, _ = train_hypernet(manifest, checkpoint, encoder, hparams)
    save_model(hypernet, ws.hypernet_path)
    return ws.store.register("hypernet", ws.hypernet_path, [encoder_id])


def _auto_curate(ws: Workspace, curation: CurationState, top_k: int) -> list[int]:
    """Stand-in for the human review: mark the top-k ranked directions relevant."""
    checkpoint = GanCheckpoint.load(ws.checkpoint_path)
    generator = checkpoint.build_generator("ema")
    result = FactorizationResult.load(ws.factorization_path)
    rng = np.random.default_rng(0)
    probes = [
        LatentCode("Z", rng.normal(size=generator.cfg.latent_dim).astype(np.float32))
        for _ in range(6)
    ]
    ranking = rank_directions(result, generator, probes, magnitude=3.0, metric="pixel")
    chosen = [r["index"] for r in ranking[:top_k]]
    for index in chosen:
        curation.set(index, "relevant", name=f"auto-{index}")
    return chosen


def _stage_augmentation(ws: Workspace, config: dict, ids: dict) -> str:
    manifest = load_manifest(ws.manifest_path)
    checkpoint = GanCheckpoint.load(ws.checkpoint_path)
    result = FactorizationResult.load(ws.factorization_path)
    curation = ws.curation()
    relevant = curation.relevant_indices()
    spec = dict(config.get("augment", {}))
    refine_steps = spec.pop("refine_steps", 2)
    per_count = spec.pop("per_transformation_count", len(manifest.split("train")))
    plan = AugmentationPlan(direction_ids=relevant, per_transformation_count=per_count, **spec)
    directions = []
    for i in relevant:
        d = result.direction(i)
        d.status = "relevant"
        d.name = curation.get(i)["name"]
        directions.append(d)
    encoder = load_encoder(ws.encoder_path)
    hypernet = load_hypernet(ws.hypernet_path)
    generate_augmented_set(
        manifest,
        plan,
        directions,
        encoder,
        checkpoint,
        ws.augment_dir,
        hypernet=hypernet,
        refine_steps=refine_steps,
    )
    return ws.store.register(
        "records",
        ws.augment_dir / "records.jsonl",
        [ids["inversion"], ids["factorization"], ids["dataset"]],
    )


def _stage_ablation(ws: Workspace, config: dict, ids: dict) -> str:
    manifest = load_manifest(ws.manifest_path)
    records = load_records(ws.augment_dir / "records.jsonl")
    spec = config.get("classifier", {})
    clf_config = ClassifierConfig(
        **{**{"n_classes": manifest.n_classes}, **spec.get("config", {})}
    )
    train_spec = TrainSpec(**spec.get("spec", {}))
    seeds = spec.get("seeds", [0, 1, 2])
    n_augment_list = spec.get("n_augment", [len(records) // 2])
    use_classifier_filter = spec.get("classifier_filter", False)
    lpips_threshold = config.get("augment", {}).get("lpips_threshold", 0.2)

    kept, _ = filter_by_lpips(records, lpips_threshold, mode="per_transformation")
    if not kept:
        raise PipelineError(
            f"the perceptual filter (threshold {lpips_threshold}) rejected every "
            "transformation; raise augment.lpips_threshold for this scale or "
            "curate milder directions"
        )
    variants: dict = {}
    for n_augment in n_augment_list:
        composed = compose_training_set(
            manifest, kept, n_augment, seed=seeds[0], images_dir=ws.augment_dir / "images"
        )
        variants[f"sa-{n_augment}"] = composed
        if use_classifier_filter:
            # the matching-size unfiltered model scores its own synthetics
            model, _ = train_classifier(composed, clf_config, train_spec, seed=seeds[0])
            filtered_kept, _ = filter_by_classifier(
                kept, model, ws.augment_dir / "images", manifest.resolution
            )
            variants[f"sa-{n_augment}-filter"] = compose_training_set(
                manifest,
                filtered_kept,
                min(n_augment, _stratifiable(filtered_kept)),
                seed=seeds[0],
                images_dir=ws.augment_dir / "images",
            )
    table = run_ablation(manifest, variants, clf_config, train_spec, seeds)
    ws.ablation_path.write_text(json.dumps(table, indent=2))
    return ws.store.register(
        "report", ws.ablation_path, [ids["augmentation"], ids["dataset"]]
    )


def _stratifiable(records) -> int:
    """Largest per-direction-balanced total drawable from these records."""
    groups: dict[int, int] = {}
    for r in records:
        groups[r.direction_id] = groups.get(r.direction_id, 0) + 1
    if not groups:
        return 0
    return min(groups.values()) * len(groups)


_STAGE_FNS = {
    "dataset": _stage_dataset,
    "gan": _stage_gan,
    "factorization": _stage_factorization,
    "inversion": _stage_inversion,
    "augmentation": _stage_augmentation,
    "ablation": _stage_ablation,
}
