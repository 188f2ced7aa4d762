"""Inversion of single images: encoder pass, hypernet refinement, optimization.

Refinement steps are accepted only when they do not increase the pixel L2
error, so every loss trace is non-increasing by construction. All L2 values
are mean squared error per pixel over [-1, 1] images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..data import ImageTensor
from ..gan.latent import LatentCode
from ..gan.networks import Generator
from ..metrics import DeskEmbedder, lpips_loss
from .models import Encoder, Hypernet

__all__ = [
    "InversionError",
    "InversionDivergedError",
    "InversionResult",
    "invert",
    "optimize_latent",
    "synthesize_inversion",
]


class InversionError(ValueError):
    pass


class InversionDivergedError(RuntimeError):
    def __init__(self, message: str, trace: list[dict]):
        super().__init__(message)
        self.trace = trace


@dataclass
class InversionResult:
    """Latent code, optional weight offsets, and the per-step loss trace."""

    latent: LatentCode
    weight_offsets: dict[int, np.ndarray] = field(default_factory=dict)
    loss_trace: list[dict] = field(default_factory=list)
    source_id: str = ""

    @property
    def initial_l2(self) -> float:
        return self.loss_trace[0]["l2"]

    @property
    def final_l2(self) -> float:
        return self.loss_trace[-1]["l2"]


def _image_tensor(image) -> torch.Tensor:
    pixels = np.asarray(getattr(image, "pixels", image), dtype=np.float32)
    return torch.from_numpy(pixels).permute(2, 0, 1).unsqueeze(0)


def _style_rows(generator: Generator, code: LatentCode) -> torch.Tensor:
    values = torch.from_numpy(code.values.astype(np.float32))
    if code.space == "W":
        return generator.broadcast(values.unsqueeze(0))
    return values.unsqueeze(0)


def _l2(a: torch.Tensor, b: torch.Tensor) -> float:
    return float(((a - b) ** 2).mean().item())


def synthesize_inversion(generator: Generator, result: InversionResult) -> ImageTensor:
    """Re-render the reconstruction described by an inversion result."""
    from ..gan.ops import synthesize

    return synthesize(
        generator,
        result.latent,
        weight_offsets=result.weight_offsets or None,
        source_id=result.source_id,
    )


def invert(
    image,
    encoder: Encoder,
    generator: Generator,
    hypernet: Hypernet | None = None,
    steps: int = 5,
    embedder=None,
) -> InversionResult:
    """Encoder initialization plus iterative hypernet weight refinement.

    Each refinement step re-predicts the full offset set from the current
    best reconstruction and keeps it only if the pixel L2 does not increase;
    rejected steps record the previous values (a plateau in the trace).
    """
    pixels = np.asarray(getattr(image, "pixels", image), dtype=np.float32)
    if pixels.shape[0] != generator.cfg.resolution:
        raise InversionError(
            f"resolution mismatch: image {pixels.shape[0]} vs generator "
            f"{generator.cfg.resolution}"
        )
    if hypernet is None:
        steps = 0
    embedder = embedder or DeskEmbedder()
    target = _image_tensor(pixels)
    source_id = str(getattr(image, "source_id", ""))

    code = encoder.encode(pixels)
    ws = _style_rows(generator, code)
    with torch.no_grad():
        recon = generator.synthesis(ws, noise_mode="fixed")
        best_l2 = _l2(recon, target)
        best_lpips = float(lpips_loss(recon, target, embedder)[0][0].item())
    best_offsets: dict[int, torch.Tensor] = {}
    best_recon = recon
    trace = [{"l2": best_l2, "lpips": best_lpips}]

    for _ in range(steps):
        with torch.no_grad():
            deltas = hypernet(target, best_recon)
            candidate = {i: d[0] for i, d in deltas.items()}
            recon_c = generator.synthesis(
                ws, noise_mode="fixed", weight_offsets={i: d[0] for i, d in deltas.items()}
            )
            l2_c = _l2(recon_c, target)
            if l2_c <= best_l2:
                best_l2 = l2_c
                best_offsets = candidate
                best_recon = recon_c
                best_lpips = float(lpips_loss(recon_c, target, embedder)[0][0].item())
        trace.append({"l2": best_l2, "lpips": best_lpips})

    return InversionResult(
        latent=code,
        weight_offsets={i: d.numpy().copy() for i, d in best_offsets.items()},
        loss_trace=trace,
        source_id=source_id,
    )


def optimize_latent(
    image,
    generator: Generator,
    init: LatentCode,
    iters: int = 100,
    lr: float = 0.05,
    lpips_weight: float = 0.8,
    embedder=None,
) -> InversionResult:
    """Gradient descent on l2 + weight * lpips over the latent code.

    The trace records the best-accepted iterate after each step (same
    acceptance semantics as `invert`), so the final loss never exceeds the
    initial one and the returned latent is the best iterate seen. Raises
    InversionDivergedError (with the trace so far) on non-finite losses.
    """
    init.require("W", "Wplus")
    embedder = embedder or DeskEmbedder()
    target = _image_tensor(image)
    source_id = str(getattr(image, "source_id", ""))
    w = torch.from_numpy(init.values.astype(np.float32)).unsqueeze(0).requires_grad_(True)
    opt = torch.optim.Adam([w], lr=lr)
    trace: list[dict] = []
    best_loss = np.inf
    best_w = init.values.copy()
    best_entry: dict = {}

    for it in range(iters + 1):
        rows = generator.broadcast(w) if init.space == "W" else w
        recon = generator.synthesis(rows, noise_mode="fixed")
        l2 = ((recon - target) ** 2).mean()
        perc = lpips_loss(recon, target, embedder)[0][0]
        loss = l2 + lpips_weight * perc
        loss_val = float(loss.item())
        if not np.isfinite(loss_val):
            raise InversionDivergedError(f"non-finite loss at iter {it}", trace)
        if loss_val < best_loss:
            best_loss = loss_val
            best_w = w.detach()[0].numpy().copy()
            best_entry = {"l2": float(l2.item()), "lpips": float(perc.item())}
        trace.append(dict(best_entry))
        if it == iters:
            break
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

    return InversionResult(
        latent=LatentCode(init.space, best_w),
        weight_offsets={},
        loss_trace=trace,
        source_id=source_id,
    )
