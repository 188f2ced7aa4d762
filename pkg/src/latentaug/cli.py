"""Command-line entry points for every pipeline stage.

The library is the primary interface; these subcommands exist so each stage
can be driven from a shell or chained by external tooling. JSON files carry
structured options (generator config, training hyperparameters, plans).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _read_json(path):
    return json.loads(Path(path).read_text())


def _cmd_dataset_make_toy(args):
    from .data import ToyClassSpec, make_toy_dataset

    if args.classes:
        raw = (
            _read_json(args.classes)
            if Path(args.classes).is_file()
            else json.loads(args.classes)
        )
        classes = {name: ToyClassSpec.from_dict(spec) for name, spec in raw.items()}
    else:
        from .data import DEFAULT_TOY_CLASSES

        classes = DEFAULT_TOY_CLASSES
    manifest = make_toy_dataset(
        args.n_per_class, classes, args.seed, args.out, resolution=args.resolution
    )
    print(f"wrote {len(manifest.entries)} images under {args.out}")


def _cmd_dataset_validate(args):
    from .data import validate_manifest

    manifest = validate_manifest(args.manifest, deep=args.deep)
    splits = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(f"ok: {len(manifest.entries)} entries, {manifest.n_classes} classes, {splits}")


def _cmd_gan_train(args):
    from .data import load_manifest
    from .gan import GanCheckpoint, GanTrainHParams, GeneratorConfig, train_gan

    manifest = load_manifest(args.manifest)
    raw = _read_json(args.config) if args.config else {}
    config = GeneratorConfig(**{**{"resolution": manifest.resolution}, **raw.get("config", {})})
    hparams = GanTrainHParams(**raw.get("hparams", {}))
    resume = GanCheckpoint.load(args.resume) if args.resume else None
    out = Path(args.out)
    ck = train_gan(
        manifest,
        config,
        hparams,
        resume_from=resume,
        progress=lambda it, g, d: print(f"step {it}: g={g:.3f} d={d:.3f}", file=sys.stderr),
    )
    path = ck.save(out / "gan.npz" if out.suffix == "" else out)
    print(f"checkpoint: {path} (step {ck.step})")


def _cmd_gan_sample(args):
    from .data import save_image
    from .gan import GanCheckpoint, sample_grid

    generator = GanCheckpoint.load(args.ckpt).build_generator("ema")
    images = sample_grid(generator, args.n, args.seed, truncation_psi=args.psi)
    out = Path(args.out)
    for i, img in enumerate(images):
        save_image(img.pixels, out / f"sample_{i:04d}.png")
    print(f"wrote {len(images)} samples to {out}")


def _cmd_factorize(args):
    from .factorization import build_weight_matrix, factorize
    from .gan import GanCheckpoint

    checkpoint = GanCheckpoint.load(args.ckpt)
    layers = "all" if args.layers == "all" else (
        args.layers if args.layers in ("coarse", "medium", "fine")
        else [int(x) for x in args.layers.split(",")]
    )
    wm = build_weight_matrix(checkpoint, layer_range=layers, normalization=args.normalization)
    result = factorize(wm, checkpoint_id=str(args.ckpt))
    result.save(args.out)
    print(
        f"factorized {wm.matrix.shape[0]}x{wm.matrix.shape[1]} weight matrix -> "
        f"{result.dim} directions; top singular values "
        f"{np.round(result.singular_values[:5], 4).tolist()}"
    )


def _cmd_directions_rank(args):
    from .factorization import FactorizationResult, rank_directions
    from .gan import GanCheckpoint, LatentCode

    result = FactorizationResult.load(args.factorization)
    generator = GanCheckpoint.load(args.ckpt).build_generator("ema")
    rng = np.random.default_rng(args.seed)
    probes = [
        LatentCode("Z", rng.normal(size=generator.cfg.latent_dim).astype(np.float32))
        for _ in range(args.probes)
    ]
    ranking = rank_directions(
        result, generator, probes, magnitude=args.magnitude, metric=args.metric
    )
    for row in ranking:
        print(json.dumps(row))


def _cmd_invert_train_encoder(args):
    from .data import load_manifest
    from .gan import GanCheckpoint
    from .inversion import InversionTrainHParams, save_model, train_encoder

    manifest = load_manifest(args.manifest)
    checkpoint = GanCheckpoint.load(args.ckpt)
    hparams = InversionTrainHParams(**(_read_json(args.hparams) if args.hparams else {}))
    encoder, log = train_encoder(manifest, checkpoint, hparams)
    save_model(encoder, args.out)
    print(
        f"encoder -> {args.out}; val L2 {log['val_l2'][-1][1]:.5f} "
        f"(mean-style floor {log['baseline_mean_w_l2']:.5f})"
    )


def _cmd_invert_train_hypernet(args):
    from .data import load_manifest
    from .gan import GanCheckpoint
    from .inversion import (
        InversionTrainHParams,
        load_encoder,
        save_model,
        train_hypernet,
    )

    manifest = load_manifest(args.manifest)
    checkpoint = GanCheckpoint.load(args.ckpt)
    encoder = load_encoder(args.encoder)
    hparams = InversionTrainHParams(**(_read_json(args.hparams) if args.hparams else {}))
    hypernet, log = train_hypernet(manifest, checkpoint, encoder, hparams)
    save_model(hypernet, args.out)
    print(
        f"hypernet -> {args.out}; val L2 {log['val_l2'][-1][1]:.5f} "
        f"(encoder-only {log['encoder_val_l2']:.5f})"
    )


def _cmd_invert_run(args):
    from .data import load_image, save_image
    from .gan import GanCheckpoint
    from .inversion import invert, load_encoder, load_hypernet, synthesize_inversion

    generator = GanCheckpoint.load(args.ckpt).build_generator("ema")
    encoder = load_encoder(args.encoder)
    hypernet = load_hypernet(args.hypernet) if args.hypernet else None
    image = load_image(args.image, generator.cfg.resolution)
    result = invert(image, encoder, generator, hypernet=hypernet, steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "inversion.json").write_text(
        json.dumps(
            {
                "source": str(args.image),
                "space": result.latent.space,
                "latent": result.latent.values.tolist(),
                "weight_offsets": {k: v.tolist() for k, v in result.weight_offsets.items()},
                "loss_trace": result.loss_trace,
            },
            indent=2,
        )
    )
    save_image(synthesize_inversion(generator, result).pixels, out / "reconstruction.png")
    print(f"inverted {args.image}: l2 {result.initial_l2:.5f} -> {result.final_l2:.5f}")


def _load_dir_images(path):
    from .data import load_image

    files = sorted(Path(path).glob("*.png"))
    if not files:
        raise SystemExit(f"no PNG images under {path}")
    return [load_image(f) for f in files]


def _cmd_metrics_fid(args):
    from .metrics import DeskEmbedder, fid

    value = fid(_load_dir_images(args.real), _load_dir_images(args.fake), DeskEmbedder())
    print(json.dumps({"fid": value}))


def _cmd_metrics_lpips(args):
    from .data import load_image
    from .metrics import DeskEmbedder, lpips

    embedder = DeskEmbedder()
    if args.pairs:
        with open(args.pairs) as fh:
            for line in fh:
                if not line.strip():
                    continue
                pair = json.loads(line)
                score = lpips(load_image(pair["a"]), load_image(pair["b"]), embedder)
                print(json.dumps({"a": pair["a"], "b": pair["b"], "lpips": score.value}))
    else:
        score = lpips(load_image(args.a), load_image(args.b), embedder)
        print(json.dumps({"a": str(args.a), "b": str(args.b), "lpips": score.value,
                          "per_layer": score.per_layer}))


def _cmd_augment_run(args):
    from .augment import AugmentationPlan, generate_augmented_set
    from .data import load_manifest
    from .factorization import FactorizationResult
    from .gan import GanCheckpoint
    from .inversion import load_encoder, load_hypernet
    from .store import CurationState

    manifest = load_manifest(args.manifest)
    plan_raw = _read_json(args.plan)
    result = FactorizationResult.load(args.factorization)
    if "direction_ids" not in plan_raw:
        if not args.curation:
            raise SystemExit("plan has no direction_ids and no --curation file given")
        curation = CurationState(args.curation, result.dim)
        plan_raw["direction_ids"] = curation.relevant_indices()
    plan = AugmentationPlan(**plan_raw)
    directions = []
    for i in plan.direction_ids:
        d = result.direction(i)
        d.status = "relevant"
        directions.append(d)
    records = generate_augmented_set(
        manifest,
        plan,
        directions,
        load_encoder(args.encoder),
        GanCheckpoint.load(args.ckpt),
        args.out,
        hypernet=load_hypernet(args.hypernet) if args.hypernet else None,
        refine_steps=args.steps,
    )
    print(f"wrote {len(records)} records under {args.out}")


def _cmd_augment_filter(args):
    from .augment import filter_by_classifier, filter_by_lpips, load_records, save_records

    records = load_records(args.records)
    if args.mode == "lpips":
        kept, rejected = filter_by_lpips(
            records, args.threshold, mode="per_image" if args.per_image else "per_transformation"
        )
    else:
        from .classifier import load_classifier

        model, _ = load_classifier(args.model)
        kept, rejected = filter_by_classifier(records, model, args.images, args.resolution)
    save_records(kept, args.out)
    print(f"kept {len(kept)}, rejected {len(rejected)} -> {args.out}")


def _cmd_augment_compose(args):
    from .augment import compose_training_set, load_records
    from .data import load_manifest, save_manifest

    manifest = load_manifest(args.manifest)
    records = load_records(args.records)
    composed = compose_training_set(manifest, records, args.n, args.seed, args.images)
    save_manifest(composed, args.out)
    print(f"composed manifest with {len(composed.entries)} entries -> {args.out}")


def _cmd_clf_train(args):
    from .classifier import ClassifierConfig, TrainSpec, save_classifier, train_classifier
    from .data import load_manifest

    manifest = load_manifest(args.manifest)
    raw = _read_json(args.config) if args.config else {}
    config = ClassifierConfig(
        **{**{"n_classes": manifest.n_classes}, **raw.get("config", {})}
    )
    spec = TrainSpec(**raw.get("spec", {}))
    model, run = train_classifier(manifest, config, spec, seed=args.seed)
    out = Path(args.out)
    save_classifier(model, config, out / "model.pt")
    (out / "run.json").write_text(json.dumps(run.to_dict(), indent=2))
    print(
        f"best val balanced accuracy {run.best_val_balanced_accuracy:.4f} "
        f"at epoch {run.best_epoch} -> {out}"
    )


def _cmd_clf_eval(args):
    from .classifier import evaluate, load_classifier
    from .data import load_manifest

    model, _ = load_classifier(args.model)
    manifest = load_manifest(args.manifest)
    report = evaluate(model, manifest, split=args.split)
    print(json.dumps(report.to_dict(), indent=2))


def _cmd_clf_ablate(args):
    from .classifier import (
        ClassifierConfig,
        TrainSpec,
        ablation_table_csv,
        run_ablation,
    )
    from .data import load_manifest

    base = load_manifest(args.manifest)
    augmented = {}
    for item in args.augmented:
        name, _, path = item.partition("=")
        augmented[name] = load_manifest(path)
    raw = _read_json(args.config) if args.config else {}
    config = ClassifierConfig(**{**{"n_classes": base.n_classes}, **raw.get("config", {})})
    spec = TrainSpec(**raw.get("spec", {}))
    seeds = [int(s) for s in args.seeds.split(",")]
    table = run_ablation(base, augmented, config, spec, seeds)
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2))
    print(ablation_table_csv(table))


def _cmd_pipeline_run(args):
    from .pipeline import run_pipeline

    summary = run_pipeline(args.config, resume=args.resume, auto_curate=args.auto_curate)
    print(json.dumps(summary, indent=2))


def _cmd_serve(args):
    from .server import serve

    print(f"serving workspace {args.workspace} on {args.host}:{args.port}")
    serve(args.workspace, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentaug")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="manifest and toy-data operations")
    ds_sub = ds.add_subparsers(dest="subcommand", required=True)
    p = ds_sub.add_parser("make-toy")
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--classes", help="JSON file or inline JSON of per-class ranges")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(fn=_cmd_dataset_make_toy)
    p = ds_sub.add_parser("validate")
    p.add_argument("manifest")
    p.add_argument("--deep", action="store_true", help="decode every image")
    p.set_defaults(fn=_cmd_dataset_validate)

    gan = sub.add_parser("gan", help="adversarial training and sampling")
    gan_sub = gan.add_subparsers(dest="subcommand", required=True)
    p = gan_sub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON with {config: ..., hparams: ...}")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=_cmd_gan_train)
    p = gan_sub.add_parser("sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--psi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gan_sample)

    p = sub.add_parser("factorize", help="SVD of the style-modulation weights")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--layers", default="all",
                   help="all | coarse | medium | fine | comma-separated indices")
    p.add_argument("--normalization", default="row_l2", choices=["row_l2", "none"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_factorize)

    dirs = sub.add_parser("directions", help="direction utilities")
    dirs_sub = dirs.add_subparsers(dest="subcommand", required=True)
    p = dirs_sub.add_parser("rank")
    p.add_argument("--factorization", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--probes", type=int, default=8)
    p.add_argument("--magnitude", type=float, default=3.0)
    p.add_argument("--metric", default="lpips", choices=["lpips", "pixel"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_directions_rank)

    inv = sub.add_parser("invert", help="inversion model training and inference")
    inv_sub = inv.add_subparsers(dest="subcommand", required=True)
    p = inv_sub.add_parser("train-encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--hparams", help="JSON hyperparameter file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_invert_train_encoder)
    p = inv_sub.add_parser("train-hypernet")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--hparams")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_invert_train_hypernet)
    p = inv_sub.add_parser("run")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--hypernet")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_invert_run)

    met = sub.add_parser("metrics", help="FID and LPIPS")
    met_sub = met.add_subparsers(dest="subcommand", required=True)
    p = met_sub.add_parser("fid")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.set_defaults(fn=_cmd_metrics_fid)
    p = met_sub.add_parser("lpips")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--pairs", help="JSONL of {a, b} pairs for batch mode")
    p.set_defaults(fn=_cmd_metrics_lpips)

    aug = sub.add_parser("augment", help="synthetic set generation and filtering")
    aug_sub = aug.add_subparsers(dest="subcommand", required=True)
    p = aug_sub.add_parser("run")
    p.add_argument("--plan", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--hypernet")
    p.add_argument("--factorization", required=True)
    p.add_argument("--curation", help="curation state JSON (for direction_ids)")
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_augment_run)
    p = aug_sub.add_parser("filter")
    p.add_argument("--mode", required=True, choices=["lpips", "classifier"])
    p.add_argument("--records", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--per-image", action="store_true")
    p.add_argument("--model", help="classifier archive (classifier mode)")
    p.add_argument("--images", help="synthetic images directory (classifier mode)")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_augment_filter)
    p = aug_sub.add_parser("compose")
    p.add_argument("--manifest", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_augment_compose)

    clf = sub.add_parser("clf", help="classifier training and evaluation")
    clf_sub = clf.add_subparsers(dest="subcommand", required=True)
    p = clf_sub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON with {config: ..., spec: ...}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_clf_train)
    p = clf_sub.add_parser("eval")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(fn=_cmd_clf_eval)
    p = clf_sub.add_parser("ablate")
    p.add_argument("--manifest", required=True)
    p.add_argument("--augmented", nargs="+", required=True, metavar="NAME=MANIFEST")
    p.add_argument("--config")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_clf_ablate)

    pipe = sub.add_parser("pipeline", help="chained end-to-end run")
    pipe_sub = pipe.add_subparsers(dest="subcommand", required=True)
    p = pipe_sub.add_parser("run")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--auto-curate", type=int, default=None, metavar="K")
    p.set_defaults(fn=_cmd_pipeline_run)

    p = sub.add_parser("serve", help="HTTP API over a workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
