"""Training loops for the inversion encoder and hypernetwork.

Both minimize pixel L2 plus an LPIPS term against a frozen generator; the
reported validation metric is plain per-pixel L2 for comparability. The
validation floor for the encoder is the L2 of reconstructions synthesized
from the mean style vector alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..data import DatasetManifest, load_split
from ..gan.checkpoint import GanCheckpoint
from ..gan.networks import Generator
from ..metrics import DeskEmbedder, lpips_loss
from .models import Encoder, Hypernet

__all__ = [
    "InversionTrainHParams",
    "InversionTrainingError",
    "train_encoder",
    "train_hypernet",
]


class InversionTrainingError(RuntimeError):
    pass


@dataclass
class InversionTrainHParams:
    lr: float = 1e-3
    batch_size: int = 8
    steps: int = 1500
    lpips_weight: float = 0.8
    seed: int = 0
    mode: str = "Wplus"  # encoder output space
    val_interval: int = 200
    encoder_base_channels: int = 32
    hypernet_base_channels: int = 32


def _split_tensors(manifest: DatasetManifest, split: str) -> torch.Tensor:
    images, _, _ = load_split(manifest, split)
    return torch.from_numpy(images).permute(0, 3, 1, 2).contiguous()


def _batch_l2(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).mean(dim=(1, 2, 3))


def _synth(generator: Generator, codes: torch.Tensor, mode: str, offsets=None) -> torch.Tensor:
    rows = generator.broadcast(codes) if mode == "W" else codes
    return generator.synthesis(rows, noise_mode="fixed", weight_offsets=offsets)


@torch.no_grad()
def _validation_l2(generator, encoder, val: torch.Tensor, hypernet=None, batch: int = 16):
    vals = []
    for i in range(0, val.shape[0], batch):
        x = val[i : i + batch]
        codes = encoder(x)
        recon = _synth(generator, codes, encoder.mode)
        if hypernet is not None:
            deltas = hypernet(x, recon)
            recon = _synth(generator, codes, encoder.mode, offsets=deltas)
        vals.append(_batch_l2(recon, x))
    return float(torch.cat(vals).mean().item())


def train_encoder(
    manifest: DatasetManifest,
    checkpoint: GanCheckpoint,
    hparams: InversionTrainHParams | None = None,
    progress=None,
) -> tuple[Encoder, dict]:
    """Fit the encoder against the frozen EMA generator.

    Returns the encoder plus a log with the per-step train loss, periodic
    validation L2, and the mean-style baseline L2 (sanity floor).
    """
    hp = hparams or InversionTrainHParams()
    generator = checkpoint.build_generator("ema")
    train = _split_tensors(manifest, "train")
    if train.shape[0] == 0:
        raise InversionTrainingError("empty train split")
    val = _split_tensors(manifest, "val")
    if val.shape[0] == 0:
        val = train[: min(16, train.shape[0])]

    torch.manual_seed(hp.seed)
    encoder = Encoder(
        generator.cfg,
        generator.num_style_inputs,
        mode=hp.mode,
        base_channels=hp.encoder_base_channels,
    )
    encoder.mean_w.copy_(generator.mean_w)
    embedder = DeskEmbedder()

    # reconstructions from the mean style alone: the floor any trained
    # encoder has to beat
    with torch.no_grad():
        mean_codes = generator.mean_w.view(1, -1).expand(val.shape[0], -1)
        mean_recon = _synth(generator, mean_codes, "W")
        baseline_l2 = float(_batch_l2(mean_recon, val).mean().item())

    opt = torch.optim.Adam(encoder.parameters(), lr=hp.lr)
    rng = torch.Generator().manual_seed(hp.seed + 1)
    log: dict = {"train_loss": [], "val_l2": [], "baseline_mean_w_l2": baseline_l2}

    for step in range(hp.steps):
        idx = torch.randint(0, train.shape[0], (hp.batch_size,), generator=rng)
        x = train[idx]
        recon = _synth(generator, encoder(x), encoder.mode)
        l2 = ((recon - x) ** 2).mean()
        perc = lpips_loss(recon, x, embedder)[0].mean()
        loss = l2 + hp.lpips_weight * perc
        if not torch.isfinite(loss):
            raise InversionTrainingError(f"encoder training diverged at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        log["train_loss"].append(float(loss.item()))
        if (step + 1) % hp.val_interval == 0 or step == hp.steps - 1:
            v = _validation_l2(generator, encoder, val)
            log["val_l2"].append((step + 1, v))
            if progress is not None:
                progress(step + 1, v)

    log["val_l2"].append((hp.steps, _validation_l2(generator, encoder, val)))
    encoder.eval()
    return encoder, log


def train_hypernet(
    manifest: DatasetManifest,
    checkpoint: GanCheckpoint,
    encoder: Encoder,
    hparams: InversionTrainHParams | None = None,
    progress=None,
) -> tuple[Hypernet, dict]:
    """Fit the weight-offset hypernetwork on top of a trained encoder."""
    hp = hparams or InversionTrainHParams()
    generator = checkpoint.build_generator("ema")
    train = _split_tensors(manifest, "train")
    if train.shape[0] == 0:
        raise InversionTrainingError("empty train split")
    val = _split_tensors(manifest, "val")
    if val.shape[0] == 0:
        val = train[: min(16, train.shape[0])]

    torch.manual_seed(hp.seed + 2)
    hypernet = Hypernet.for_generator(generator, base_channels=hp.hypernet_base_channels)
    embedder = DeskEmbedder()
    encoder.eval()
    for p in encoder.parameters():
        p.requires_grad_(False)

    encoder_val_l2 = _validation_l2(generator, encoder, val)
    opt = torch.optim.Adam(hypernet.parameters(), lr=hp.lr)
    rng = torch.Generator().manual_seed(hp.seed + 3)
    log: dict = {"train_loss": [], "val_l2": [], "encoder_val_l2": encoder_val_l2}

    for step in range(hp.steps):
        idx = torch.randint(0, train.shape[0], (hp.batch_size,), generator=rng)
        x = train[idx]
        with torch.no_grad():
            codes = encoder(x)
            recon0 = _synth(generator, codes, encoder.mode)
        deltas = hypernet(x, recon0)
        recon1 = _synth(generator, codes, encoder.mode, offsets=deltas)
        l2 = ((recon1 - x) ** 2).mean()
        perc = lpips_loss(recon1, x, embedder)[0].mean()
        loss = l2 + hp.lpips_weight * perc
        if not torch.isfinite(loss):
            raise InversionTrainingError(f"hypernet training diverged at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        log["train_loss"].append(float(loss.item()))
        if (step + 1) % hp.val_interval == 0 or step == hp.steps - 1:
            v = _validation_l2(generator, encoder, val, hypernet=hypernet)
            log["val_l2"].append((step + 1, v))
            if progress is not None:
                progress(step + 1, v)

    log["val_l2"].append((hp.steps, _validation_l2(generator, encoder, val, hypernet=hypernet)))
    hypernet.eval()
    return hypernet, log
