"""Small torch/numpy boundary helpers shared across modules."""

from __future__ import annotations

import numpy as np
import torch


def to_nchw(images) -> torch.Tensor:
    """Stack HxWx3 float arrays (or one array / ImageTensor-likes) into N,3,H,W."""
    if isinstance(images, torch.Tensor):
        return images
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    pixels = []
    for im in images:
        arr = getattr(im, "pixels", im)
        pixels.append(np.asarray(arr, dtype=np.float32))
    batch = np.stack(pixels)
    return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous()


def to_hwc(t: torch.Tensor) -> np.ndarray:
    """N,3,H,W (or 3,H,W) tensor back to numpy HxWx3 float32."""
    if t.ndim == 3:
        t = t.unsqueeze(0)
    arr = t.detach().permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)
    return arr[0] if arr.shape[0] == 1 and t.shape[0] == 1 else arr


def seeded_generator(seed: int) -> torch.Generator:
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed))
    return gen
