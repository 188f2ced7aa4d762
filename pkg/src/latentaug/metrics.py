"""Distribution- and pair-level image metrics.

Two quantities drive every evaluation in the pipeline:

* the Frechet distance between Gaussian fits of deep-feature embeddings of
  two image sets (distribution similarity), and
* a perceptual pair distance built from channel-normalized deep-feature
  differences summed over several tap layers (LPIPS-style).

Both run on a pluggable feature backbone. The desk default is a small
fixed-seed random-weight convolutional stack: random features keep every
numerical property testable without shipping pretrained weights, and their
distances are rank-stable for toy comparisons. A pretrained backbone can be
plugged in through :class:`TorchBackboneEmbedder`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .torchutil import seeded_generator, to_nchw

__all__ = [
    "MetricError",
    "DeskEmbedder",
    "TorchBackboneEmbedder",
    "GaussianFit",
    "LpipsScore",
    "embed",
    "fit_gaussian",
    "frechet_distance",
    "fid",
    "lpips",
    "lpips_loss",
]


class MetricError(ValueError):
    """Raised on dimension mismatches or unrecoverable numerical failures."""


class DeskEmbedder:
    """Fixed random-weight conv feature extractor with three tap layers.

    Weights are drawn once from a seeded generator and never trained, so the
    map image -> features is deterministic. The FID embedding is the global
    average pool of the last tap.
    """

    def __init__(self, seed: int = 7, channels: tuple[int, ...] = (16, 32, 64)):
        gen = seeded_generator(seed)
        self.weights: list[torch.Tensor] = []
        self.biases: list[torch.Tensor] = []
        c_in = 3
        for c_out in channels:
            fan_in = c_in * 9
            w = torch.randn(c_out, c_in, 3, 3, generator=gen) * (2.0 / fan_in) ** 0.5
            self.weights.append(w)
            self.biases.append(torch.zeros(c_out))
            c_in = c_out
        self.channel_weights = [torch.ones(c) for c in channels]
        self.embedding_dim = channels[-1]

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Tap activations for a batch of N,3,H,W images in [-1, 1]."""
        taps = []
        h = x
        for w, b in zip(self.weights, self.biases):
            h = F.conv2d(h, w.to(h.dtype), b.to(h.dtype), stride=2, padding=1)
            h = F.leaky_relu(h, 0.2)
            taps.append(h)
        return taps

    def embed_batch(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)[-1].mean(dim=(2, 3))


class TorchBackboneEmbedder:
    """Adapter exposing an arbitrary torch feature stack as an embedder.

    ``stages`` are applied in sequence and each stage's output is a tap.
    Per-channel LPIPS weights may be supplied (e.g. learned calibration
    weights of a pretrained perceptual metric); default is unit weights.
    """

    def __init__(self, stages: list[torch.nn.Module], channel_weights=None):
        if not stages:
            raise MetricError("at least one backbone stage required")
        self.stages = stages
        for stage in self.stages:
            for p in stage.parameters():
                p.requires_grad_(False)
        self._channel_weights = channel_weights
        self.embedding_dim: int | None = None

    @property
    def channel_weights(self):
        return self._channel_weights

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        h = x
        for stage in self.stages:
            h = stage(h)
            taps.append(h)
        return taps

    def embed_batch(self, x: torch.Tensor) -> torch.Tensor:
        out = self.features(x)[-1].mean(dim=(2, 3))
        self.embedding_dim = out.shape[1]
        return out


@dataclass
class GaussianFit:
    """Sample mean and unbiased covariance of an embedded image set."""

    mean: np.ndarray
    covariance: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.n_samples < 2:
            raise MetricError("GaussianFit requires n_samples >= 2")
        if self.covariance.shape != (self.mean.size, self.mean.size):
            raise MetricError("covariance shape does not match mean")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-8):
            raise MetricError("covariance must be symmetric")


@dataclass
class LpipsScore:
    """Perceptual distance with its per-tap-layer decomposition."""

    value: float
    per_layer: list[float]


def embed(images, embedder, batch_size: int = 64) -> np.ndarray:
    """Embed images into an n x embedding_dim feature matrix, order preserved."""
    if not isinstance(images, (np.ndarray, torch.Tensor)) and len(images) == 0:
        raise MetricError("embed requires a nonempty image list")
    x = to_nchw(images)
    if x.shape[0] == 0:
        raise MetricError("embed requires a nonempty image list")
    rows = []
    with torch.no_grad():
        for i in range(0, x.shape[0], batch_size):
            rows.append(embedder.embed_batch(x[i : i + batch_size]).cpu().numpy())
    return np.concatenate(rows, axis=0).astype(np.float64)


def fit_gaussian(features: np.ndarray) -> GaussianFit:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise MetricError("fit_gaussian requires an n x d matrix with n >= 2")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = 0.5 * (cov + cov.T)
    return GaussianFit(mean=mean, covariance=cov, n_samples=features.shape[0])


def _psd_sqrt(mat: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    floor = -tol * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < floor:
        raise MetricError(f"matrix square root failed: eigenvalue {vals.min()} below {floor}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """Squared Frechet distance between two Gaussian fits.

    d^2 = |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the cross
    square root evaluated through the symmetric form
    S_a^{1/2} S_b S_a^{1/2} and negative eigenvalues clipped inside a -1e-6
    tolerance.
    """
    if a.mean.shape != b.mean.shape:
        raise MetricError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    sqrt_a = _psd_sqrt(a.covariance)
    cross = sqrt_a @ b.covariance @ sqrt_a
    vals = np.linalg.eigvalsh(0.5 * (cross + cross.T))
    floor = -1e-6 * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < floor:
        raise MetricError(f"cross-covariance square root failed: eigenvalue {vals.min()}")
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    diff = a.mean - b.mean
    d2 = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * tr_sqrt)
    if d2 < -1e-6:
        raise MetricError(f"Frechet distance {d2} below numerical tolerance")
    return max(d2, 0.0)


def fid(real, fake, embedder) -> float:
    """Frechet distance between the embedded real and generated image sets."""
    return frechet_distance(
        fit_gaussian(embed(real, embedder)), fit_gaussian(embed(fake, embedder))
    )


def _normalize_channels(t: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((t * t).sum(dim=1, keepdim=True))
    return t / (norm + eps)


def lpips_loss(a: torch.Tensor, b: torch.Tensor, embedder, flip_average: bool = True):
    """Differentiable perceptual distance for N,3,H,W batches.

    Returns (per-image values tensor, per-layer means). For every tap layer
    the channel-normalized activations are compared by squared difference,
    weighted per channel, and averaged spatially. Averaging the metric over a
    simultaneous horizontal flip of both inputs makes it exactly invariant to
    flipping the pair, at twice the cost.
    """
    if a.shape != b.shape:
        raise MetricError(f"resolution mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    variants = [(a, b)]
    if flip_average:
        variants.append((torch.flip(a, dims=[3]), torch.flip(b, dims=[3])))
    weights = getattr(embedder, "channel_weights", None)
    per_layer_acc: list[torch.Tensor] = []
    for av, bv in variants:
        fa = embedder.features(av)
        fb = embedder.features(bv)
        for i, (ta, tb) in enumerate(zip(fa, fb)):
            diff = (_normalize_channels(ta) - _normalize_channels(tb)) ** 2
            if weights is not None:
                diff = diff * weights[i].to(diff.dtype).view(1, -1, 1, 1)
            layer_val = diff.sum(dim=1).mean(dim=(1, 2))
            if i < len(per_layer_acc):
                per_layer_acc[i] = per_layer_acc[i] + layer_val
            else:
                per_layer_acc.append(layer_val)
    scale = 1.0 / len(variants)
    per_layer = [v * scale for v in per_layer_acc]
    total = per_layer[0]
    for v in per_layer[1:]:
        total = total + v
    return total, per_layer


def lpips(a, b, embedder, flip_average: bool = True) -> LpipsScore:
    """Perceptual distance between two images ([-1,1] HxWx3 or ImageTensor)."""
    ta = to_nchw([a])
    tb = to_nchw([b])
    with torch.no_grad():
        _, per_layer = lpips_loss(ta, tb, embedder, flip_average=flip_average)
    layer_vals = [float(v[0].item()) for v in per_layer]
    return LpipsScore(value=float(sum(layer_vals)), per_layer=layer_vals)
