"""Build a tiny fixture workspace and serve the latentaug API over it.

Test infrastructure for the explorer's contract tests: an untrained
(0-iteration) GAN is enough to exercise every endpoint deterministically.
Usage: python scripts/serve_fixture.py WORKDIR PORT
"""

import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT / "src"))

import torch  # noqa: E402

from latentaug.data import ToyClassSpec, make_toy_dataset  # noqa: E402
from latentaug.factorization import build_weight_matrix, factorize  # noqa: E402
from latentaug.gan import GanTrainHParams, GeneratorConfig, train_gan  # noqa: E402
from latentaug.inversion import Encoder, Hypernet, save_model  # noqa: E402
from latentaug.pipeline import Workspace  # noqa: E402


def build_workspace(root: Path) -> Workspace:
    ws = Workspace(root)
    if ws.checkpoint_path.exists():
        return ws
    manifest = make_toy_dataset(
        6,
        {"faint": ToyClassSpec(), "dark": ToyClassSpec(lesion_pigment=(0.7, 0.9))},
        seed=0,
        out_dir=ws.manifest_path.parent,
        resolution=32,
    )
    cfg = GeneratorConfig(latent_dim=8, mapping_layers=1, base_channels=16, resolution=32)
    checkpoint = train_gan(manifest, cfg, GanTrainHParams(iterations=0, mean_w_samples=100))
    checkpoint.save(ws.checkpoint_path)
    generator = checkpoint.build_generator("ema")
    factorize(build_weight_matrix(checkpoint)).save(ws.factorization_path)
    torch.manual_seed(0)
    encoder = Encoder(cfg, generator.num_style_inputs, base_channels=8, hidden=32)
    encoder.mean_w.copy_(generator.mean_w)
    save_model(encoder, ws.encoder_path)
    save_model(Hypernet.for_generator(generator, base_channels=8, hidden=32),
               ws.hypernet_path)
    dataset_id = ws.store.register("dataset", ws.manifest_path)
    ws.store.register("checkpoint", ws.checkpoint_path, [dataset_id])
    ws.jobs.update("fixture", "done", progress=1.0)
    return ws


def main() -> None:
    workdir, port = Path(sys.argv[1]), int(sys.argv[2])
    ws = build_workspace(workdir)

    import uvicorn

    from latentaug.server import create_app

    uvicorn.run(create_app(ws), host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    main()
