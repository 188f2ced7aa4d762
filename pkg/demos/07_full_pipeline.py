"""One-call pipeline: dataset -> GAN -> factorize -> invert -> augment -> ablate.

Uses a deliberately small configuration so the whole chain finishes in a
couple of minutes; artifact provenance lands in the workspace store. Without
--auto-curate the run pauses after inversion until directions are marked
relevant (that is the explorer UI's job); here the top-2 ranked directions
are accepted automatically.

Afterwards, inspect the workspace with the HTTP service:

    latentaug serve --workspace demos/out/07_pipeline
"""

import json
import pathlib

from latentaug.pipeline import Workspace, run_pipeline

workspace = pathlib.Path(__file__).parent / "out" / "07_pipeline"
config = {
    "workspace": str(workspace),
    "dataset": {
        "kind": "toy",
        "n_per_class": 30,
        "seed": 0,
        "resolution": 32,
        "classes": {
            "faint-lesion": {"lesion_pigment": [0.30, 0.50]},
            "dark-lesion": {"lesion_pigment": [0.65, 0.95]},
        },
    },
    "gan": {
        "config": {"latent_dim": 16, "mapping_layers": 2, "base_channels": 32},
        "hparams": {"iterations": 400, "batch_size": 8, "mean_w_samples": 1000,
                    "log_interval": 100},
    },
    "inversion": {"hparams": {"steps": 300, "batch_size": 8, "val_interval": 100}},
    "augment": {"per_transformation_count": 16, "refine_steps": 2,
                "lpips_threshold": 2.0, "seed": 0},  # lax: 400-step GAN reconstructions are crude
    "classifier": {
        "config": {"width": 16},
        "spec": {"max_epochs": 12, "patience": 6, "batch_size": 16},
        "seeds": [0, 1],
        "n_augment": [16],
        "classifier_filter": False,
    },
}

summary = run_pipeline(config, resume=True, auto_curate=2)
print(json.dumps(summary, indent=2))

ws = Workspace(workspace)
print("\nartifact provenance:")
for entry in ws.store.entries():
    parents = ", ".join(entry.parent_ids) or "-"
    print(f"  {entry.artifact_id:20s} <- {parents}")

table = json.loads(ws.ablation_path.read_text())
print("\nablation rows:")
for row in table["rows"]:
    print(f"  {row['name']:12s} balanced accuracy {row['mean_balanced_accuracy']:.3f} "
          f"(delta {row['delta']:+.3f})")
