"""Map real images into the latent space and edit them along directions.

Trains the feed-forward encoder against the frozen generator, then the
hypernetwork that predicts per-channel weight offsets to close the
remaining reconstruction gap. Shows the refinement trace (monotone by the
acceptance rule), the optimization fallback, and a real image moved along
a semantic direction.
"""

import pathlib
import time

import numpy as np

from latentaug.data import load_image, load_manifest, save_image
from latentaug.factorization import FactorizationResult, apply_direction
from latentaug.gan import GanCheckpoint, synthesize
from latentaug.inversion import (
    InversionTrainHParams,
    invert,
    load_encoder,
    load_hypernet,
    optimize_latent,
    save_model,
    synthesize_inversion,
    train_encoder,
    train_hypernet,
)

out = pathlib.Path(__file__).parent / "out" / "04_inversion"
out.mkdir(parents=True, exist_ok=True)
gan_dir = out.parent / "02_gan"
if not (gan_dir / "gan.npz").exists():
    raise SystemExit("run demos/02_train_gan.py first")

checkpoint = GanCheckpoint.load(gan_dir / "gan.npz")
generator = checkpoint.build_generator("ema")
pool = load_manifest(gan_dir / "pool" / "manifest.jsonl")

if not (out / "encoder.npz").exists():
    t0 = time.time()
    encoder, log = train_encoder(
        pool, checkpoint, InversionTrainHParams(steps=2000, batch_size=8, seed=0)
    )
    save_model(encoder, out / "encoder.npz")
    print(f"encoder trained in {(time.time() - t0) / 60:.1f} min: "
          f"val L2 {log['val_l2'][-1][1]:.5f} "
          f"(mean-style floor {log['baseline_mean_w_l2']:.5f})")
encoder = load_encoder(out / "encoder.npz")

if not (out / "hypernet.npz").exists():
    t0 = time.time()
    hypernet, log = train_hypernet(
        pool, checkpoint, encoder,
        InversionTrainHParams(steps=900, batch_size=8, seed=1, lr=5e-4),
    )
    save_model(hypernet, out / "hypernet.npz")
    print(f"hypernet trained in {(time.time() - t0) / 60:.1f} min: "
          f"val L2 {log['val_l2'][-1][1]:.5f} (encoder-only {log['encoder_val_l2']:.5f})")
hypernet = load_hypernet(out / "hypernet.npz")

# invert a held-out image: encoder pass + 5 refinement steps
entry = pool.split("val")[0]
target = load_image(pool.resolve(entry), pool.resolution)
result = invert(target, encoder, generator, hypernet=hypernet, steps=5)
print("refinement trace (L2):", [round(e["l2"], 5) for e in result.loss_trace])
recon = synthesize_inversion(generator, result)
save_image(np.concatenate([target, recon.pixels], axis=1), out / "inversion_pair.png")

# the optimization fallback keeps descending from the encoder warm start
polished = optimize_latent(target, generator, result.latent, iters=40, lr=0.05)
print(f"optimization polish: {polished.loss_trace[0]['l2']:.5f} -> "
      f"{polished.loss_trace[-1]['l2']:.5f}")

# edit the inverted latent along the strongest factorized direction
fact_path = out.parent / "03_factorization" / "factorization.npz"
if fact_path.exists():
    factorization = FactorizationResult.load(fact_path)
    direction = factorization.direction(0)
    strip = [target]
    for magnitude in (-3.0, -1.5, 0.0, 1.5, 3.0):
        edited = apply_direction(result.latent, direction, magnitude)
        strip.append(
            synthesize(generator, edited, weight_offsets=result.weight_offsets or None).pixels
        )
    save_image(np.concatenate(strip, axis=1), out / "edited_real_image.png")
    print(f"real-image edit strip -> {out / 'edited_real_image.png'}")
else:
    print("run demos/03_factorize_directions.py to also see real-image edits")
