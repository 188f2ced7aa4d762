"""Inference-side generator operations on latent codes and images."""

from __future__ import annotations

import numpy as np
import torch

from ..data import ImageTensor
from ..torchutil import to_hwc
from .latent import LatentCode
from .networks import Generator


def map_latent(generator: Generator, z: LatentCode, truncation_psi: float = 1.0) -> LatentCode:
    """Map a Z code to W, truncated toward the stored mean style vector.

    psi=1 is the untruncated map; psi=0 collapses every z onto mean_w.
    """
    z.require("Z")
    if not 0.0 <= truncation_psi <= 1.0:
        raise ValueError(f"truncation_psi must be in [0, 1], got {truncation_psi}")
    if z.dim != generator.cfg.latent_dim:
        raise ValueError(f"latent dim mismatch: {z.dim} != {generator.cfg.latent_dim}")
    with torch.no_grad():
        w = generator.mapping(torch.from_numpy(z.values).unsqueeze(0))
        mean = generator.mean_w.unsqueeze(0)
        w = mean + truncation_psi * (w - mean)
    return LatentCode("W", w[0].numpy())


def _style_rows(generator: Generator, code: LatentCode) -> torch.Tensor:
    code.require("W", "Wplus")
    if code.dim != generator.cfg.latent_dim:
        raise ValueError(f"latent dim mismatch: {code.dim} != {generator.cfg.latent_dim}")
    values = torch.from_numpy(code.values.astype(np.float32))
    if code.space == "W":
        return generator.broadcast(values.unsqueeze(0))
    if code.values.shape[0] != generator.num_style_inputs:
        raise ValueError(
            f"Wplus row mismatch: {code.values.shape[0]} != {generator.num_style_inputs}"
        )
    return values.unsqueeze(0)


def synthesize(
    generator: Generator,
    code: LatentCode,
    noise_mode: str = "fixed",
    weight_offsets: dict[int, np.ndarray] | None = None,
    source_id: str = "",
) -> ImageTensor:
    """Render one image from a W or W+ code; pure in (code, offsets) for fixed noise."""
    ws = _style_rows(generator, code)
    offsets = None
    if weight_offsets:
        offsets = {
            int(i): torch.as_tensor(np.asarray(delta, dtype=np.float32))
            for i, delta in weight_offsets.items()
        }
    with torch.no_grad():
        img = generator.synthesis(ws, noise_mode=noise_mode, weight_offsets=offsets)
    return ImageTensor(pixels=to_hwc(img), source_id=source_id)


def sample_grid(
    generator: Generator,
    n: int,
    seed: int,
    truncation_psi: float = 1.0,
    noise_mode: str = "fixed",
    batch_size: int = 16,
) -> list[ImageTensor]:
    """Draw n deterministic samples from the prior for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = torch.Generator().manual_seed(int(seed))
    z = torch.randn(n, generator.cfg.latent_dim, generator=gen)
    images: list[ImageTensor] = []
    with torch.no_grad():
        for i in range(0, n, batch_size):
            zb = z[i : i + batch_size]
            w = generator.mapping(zb)
            if truncation_psi != 1.0:
                mean = generator.mean_w.unsqueeze(0)
                w = mean + truncation_psi * (w - mean)
            imgs = generator.synthesis(generator.broadcast(w), noise_mode=noise_mode)
            arr = to_hwc(imgs)
            if arr.ndim == 3:
                arr = arr[None]
            for j in range(arr.shape[0]):
                images.append(ImageTensor(pixels=arr[j], source_id=f"sample:{seed}:{i + j}"))
    return images
