"""Adversarial training loop: non-saturating logistic loss with R1 penalty.

The loop keeps an exponential moving average of the generator for sampling
and factorization, evaluates FID against the training images at a
configurable interval, and aborts with a diagnostic on non-finite losses.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..data import DatasetManifest, load_split
from ..metrics import DeskEmbedder, fid
from .checkpoint import GanCheckpoint
from .networks import Discriminator, Generator, GeneratorConfig


class GanTrainingError(RuntimeError):
    """Raised when training encounters non-finite losses or bad inputs."""


@dataclass
class GanTrainHParams:
    lr: float = 2e-3
    batch_size: int = 16
    iterations: int = 2000
    r1_gamma: float = 10.0
    r1_interval: int = 8
    ema_decay: float = 0.999
    seed: int = 0
    augment_hflip: bool = True
    fid_interval: int = 0  # 0 disables periodic FID
    fid_samples: int = 64
    log_interval: int = 50
    mean_w_samples: int = 10_000


def init_gan(config: GeneratorConfig, seed: int = 0) -> tuple[Generator, Discriminator]:
    """Deterministically initialized generator/discriminator pair."""
    torch.manual_seed(seed)
    return Generator(config), Discriminator(config)


def generator_loss(generator: Generator, discriminator: Discriminator, z: torch.Tensor,
                   noise_mode: str = "fixed") -> torch.Tensor:
    """Non-saturating logistic generator loss: softplus(-D(G(z)))."""
    fake = generator.synthesis(
        generator.broadcast(generator.mapping(z)), noise_mode=noise_mode
    )
    return F.softplus(-discriminator(fake)).mean()


def r1_penalty(discriminator: Discriminator, real: torch.Tensor) -> torch.Tensor:
    real = real.detach().requires_grad_(True)
    logits = discriminator(real)
    (grad,) = torch.autograd.grad(logits.sum(), real, create_graph=True)
    return grad.pow(2).sum(dim=[1, 2, 3]).mean()


def discriminator_loss(
    generator: Generator,
    discriminator: Discriminator,
    real: torch.Tensor,
    z: torch.Tensor,
    r1_gamma: float = 10.0,
    noise_mode: str = "fixed",
) -> torch.Tensor:
    """softplus(D(fake)) + softplus(-D(real)) + (gamma/2) R1(real)."""
    with torch.no_grad():
        fake = generator.synthesis(
            generator.broadcast(generator.mapping(z)), noise_mode=noise_mode
        )
    loss = F.softplus(discriminator(fake)).mean() + F.softplus(-discriminator(real)).mean()
    if r1_gamma > 0:
        loss = loss + 0.5 * r1_gamma * r1_penalty(discriminator, real)
    return loss


@torch.no_grad()
def _ema_update(ema: Generator, live: Generator, decay: float) -> None:
    for p_ema, p in zip(ema.parameters(), live.parameters()):
        p_ema.lerp_(p, 1.0 - decay)
    for b_ema, b in zip(ema.buffers(), live.buffers()):
        b_ema.copy_(b)


def train_gan(
    manifest: DatasetManifest,
    config: GeneratorConfig,
    hparams: GanTrainHParams | None = None,
    resume_from: GanCheckpoint | None = None,
    progress=None,
) -> GanCheckpoint:
    """Train on the manifest's train split and return the final checkpoint.

    Optimizer state is not checkpointed; resuming restarts Adam moments but
    keeps all network weights including the EMA copy.
    """
    hp = hparams or GanTrainHParams()
    images, _, _ = load_split(manifest, "train")
    if images.shape[0] < 2:
        raise GanTrainingError("need at least 2 training images")
    if manifest.resolution != config.resolution:
        raise GanTrainingError(
            f"manifest resolution {manifest.resolution} != generator {config.resolution}"
        )
    data = torch.from_numpy(images).permute(0, 3, 1, 2).contiguous()

    generator, discriminator = init_gan(config, hp.seed)
    g_ema = copy.deepcopy(generator)
    for p in g_ema.parameters():
        p.requires_grad_(False)
    step0 = 0
    fid_history: list[tuple[int, float]] = []
    training_log: list[dict] = []
    if resume_from is not None:
        resume_from._load_into(generator, "g")
        resume_from._load_into(g_ema, "g_ema")
        resume_from._load_into(discriminator, "d")
        step0 = resume_from.step
        fid_history = list(resume_from.fid_history)
        training_log = list(resume_from.training_log)

    opt_g = torch.optim.Adam(generator.parameters(), lr=hp.lr, betas=(0.0, 0.99))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=hp.lr, betas=(0.0, 0.99))
    rng = torch.Generator().manual_seed(hp.seed + 1)
    embedder = DeskEmbedder() if hp.fid_interval > 0 else None

    def real_batch() -> torch.Tensor:
        idx = torch.randint(0, data.shape[0], (hp.batch_size,), generator=rng)
        batch = data[idx]
        if hp.augment_hflip:
            flip = torch.rand(batch.shape[0], generator=rng) < 0.5
            batch = torch.where(flip.view(-1, 1, 1, 1), batch.flip(3), batch)
        return batch

    for it in range(step0, step0 + hp.iterations):
        # discriminator step
        real = real_batch()
        z = torch.randn(hp.batch_size, config.latent_dim, generator=rng)
        with torch.no_grad():
            fake = generator.synthesis(
                generator.broadcast(generator.mapping(z)), noise_mode="random"
            )
        d_loss = F.softplus(discriminator(fake)).mean() + F.softplus(
            -discriminator(real)
        ).mean()
        r1_val = 0.0
        if hp.r1_gamma > 0 and it % hp.r1_interval == 0:
            r1 = r1_penalty(discriminator, real)
            r1_val = float(r1.item())
            d_loss = d_loss + 0.5 * hp.r1_gamma * hp.r1_interval * r1
        dl = float(d_loss.item())
        if not math.isfinite(dl):
            raise GanTrainingError(f"non-finite discriminator loss at step {it}: {dl}")
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()

        # generator step
        z = torch.randn(hp.batch_size, config.latent_dim, generator=rng)
        g_loss = F.softplus(
            -discriminator(
                generator.synthesis(
                    generator.broadcast(generator.mapping(z)), noise_mode="random"
                )
            )
        ).mean()
        gl = float(g_loss.item())
        if not math.isfinite(gl):
            raise GanTrainingError(f"non-finite generator loss at step {it}: {gl}")
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()
        _ema_update(g_ema, generator, hp.ema_decay)
        if it % hp.log_interval == 0 or it == step0 + hp.iterations - 1:
            training_log.append({"step": it, "g_loss": gl, "d_loss": dl, "r1": r1_val})
            if progress is not None:
                progress(it, gl, dl)
        if embedder is not None and hp.fid_interval > 0 and (it + 1) % hp.fid_interval == 0:
            fid_history.append((it + 1, _eval_fid(g_ema, images, embedder, hp)))

    g_ema.estimate_mean_w(hp.mean_w_samples, seed=hp.seed)
    generator.mean_w.copy_(g_ema.mean_w)
    return GanCheckpoint.from_models(
        config,
        step0 + hp.iterations,
        generator,
        g_ema,
        discriminator,
        fid_history=fid_history,
        training_log=training_log,
    )


def _eval_fid(g_ema: Generator, images: np.ndarray, embedder, hp: GanTrainHParams) -> float:
    n = min(hp.fid_samples, images.shape[0])
    gen = torch.Generator().manual_seed(hp.seed + 7)
    z = torch.randn(n, g_ema.cfg.latent_dim, generator=gen)
    with torch.no_grad():
        fakes = []
        for i in range(0, n, 32):
            w = g_ema.mapping(z[i : i + 32])
            out = g_ema.synthesis(g_ema.broadcast(w), noise_mode="random")
            fakes.append(out.permute(0, 2, 3, 1).numpy())
    fake_arr = np.concatenate(fakes, axis=0)
    return float(fid(list(images[:n]), list(fake_arr), embedder))
