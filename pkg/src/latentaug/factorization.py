"""Closed-form extraction of semantic edit directions from generator weights.

The style-affine matrices of selected synthesis layers are stacked into one
tall weight matrix whose right singular vectors are directions of maximal
modulation variance in the style space. Moving a latent along such a
direction edits the synthesized image; the singular value orders directions
by how strongly the generator responds. No labels, no training.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gan.checkpoint import GanCheckpoint
from .gan.latent import LatentCode
from .gan.networks import Generator
from .gan.ops import map_latent, synthesize
from .metrics import DeskEmbedder, lpips

__all__ = [
    "FactorizationError",
    "WeightMatrix",
    "SemanticDirection",
    "FactorizationResult",
    "build_weight_matrix",
    "factorize",
    "apply_direction",
    "rank_directions",
]

NORMALIZATIONS = ("none", "row_l2")
CURATION_STATUSES = ("unreviewed", "relevant", "duplicate", "rejected")

# Relative gap below which adjacent singular values are flagged degenerate:
# directions inside such an eigenspace are reported as computed, but only
# subspace-level properties are meaningful.
DEGENERACY_GAP = 1e-6


class FactorizationError(ValueError):
    pass


@dataclass
class WeightMatrix:
    """Stacked style-affine rows of the selected synthesis layers."""

    matrix: np.ndarray  # M x D
    layer_slices: dict[int, tuple[int, int]]
    normalization: str = "row_l2"

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise FactorizationError("weight matrix must be 2-D")
        m, d = self.matrix.shape
        if m < d:
            raise FactorizationError(f"ill-posed decomposition: M={m} < D={d}")
        if self.normalization not in NORMALIZATIONS:
            raise FactorizationError(f"unknown normalization {self.normalization!r}")
        covered = sorted(self.layer_slices.values())
        pos = 0
        for lo, hi in covered:
            if lo != pos:
                raise FactorizationError("layer_slices must partition the row range")
            pos = hi
        if pos != m:
            raise FactorizationError("layer_slices must cover all rows")


@dataclass
class SemanticDirection:
    """One unit eigenvector plus its strength and curation metadata."""

    vector: np.ndarray
    singular_value: float
    index: int
    name: str | None = None
    status: str = "unreviewed"
    duplicate_of: int | None = None
    degenerate: bool = False

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-6:
            raise FactorizationError(f"direction {self.index} is not unit norm ({norm})")
        if self.status not in CURATION_STATUSES:
            raise FactorizationError(f"unknown status {self.status!r}")


@dataclass
class FactorizationResult:
    """Right singular vectors (columns) and singular values of the weight matrix."""

    directions: np.ndarray  # D x D orthonormal, column j = direction j
    singular_values: np.ndarray  # descending, non-negative
    layer_range: list[int]
    normalization: str = "row_l2"
    checkpoint_id: str = ""
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        self.directions = np.asarray(self.directions, dtype=np.float64)
        self.singular_values = np.asarray(self.singular_values, dtype=np.float64)
        d = self.directions.shape[0]
        if self.directions.shape != (d, d):
            raise FactorizationError("directions must be square D x D")
        if self.singular_values.shape != (d,):
            raise FactorizationError("one singular value per direction required")
        if np.any(np.diff(self.singular_values) > 1e-12):
            raise FactorizationError("singular values must be non-increasing")
        gram = self.directions.T @ self.directions
        if np.abs(gram - np.eye(d)).max() > 1e-5:
            raise FactorizationError("directions are not orthonormal")
        if self.degenerate.size == 0:
            self.degenerate = np.zeros(d, dtype=bool)

    @property
    def dim(self) -> int:
        return self.directions.shape[0]

    def direction(self, index: int) -> SemanticDirection:
        if not 0 <= index < self.dim:
            raise FactorizationError(f"direction index {index} out of range")
        return SemanticDirection(
            vector=self.directions[:, index].copy(),
            singular_value=float(self.singular_values[index]),
            index=index,
            degenerate=bool(self.degenerate[index]),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = json.dumps(
            {
                "layer_range": [int(i) for i in self.layer_range],
                "normalization": self.normalization,
                "checkpoint_id": self.checkpoint_id,
            }
        )
        buf = io.BytesIO()
        np.savez(
            buf,
            directions=self.directions,
            singular_values=self.singular_values,
            degenerate=self.degenerate,
            __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8),
        )
        path.write_bytes(buf.getvalue())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "FactorizationResult":
        with np.load(Path(path)) as data:
            meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
            return cls(
                directions=data["directions"],
                singular_values=data["singular_values"],
                degenerate=data["degenerate"].astype(bool),
                layer_range=meta["layer_range"],
                normalization=meta["normalization"],
                checkpoint_id=meta["checkpoint_id"],
            )


def build_weight_matrix(
    checkpoint: GanCheckpoint | Generator,
    layer_range="all",
    normalization: str = "row_l2",
) -> WeightMatrix:
    """Stack the effective style-affine matrices of the selected conv layers.

    Rows are modulation output channels; columns are style dimensions. With
    row_l2 every row is scaled to unit norm before concatenation so that
    wide layers do not dominate the spectrum.
    """
    if normalization not in NORMALIZATIONS:
        raise FactorizationError(f"unknown normalization {normalization!r}")
    generator = (
        checkpoint if isinstance(checkpoint, Generator) else checkpoint.build_generator("ema")
    )
    pairs = generator.style_affine_weights(layer_range)
    blocks: list[np.ndarray] = []
    slices: dict[int, tuple[int, int]] = {}
    pos = 0
    for layer_index, weight in pairs:
        block = weight.numpy().astype(np.float64)
        if not np.all(np.isfinite(block)):
            raise FactorizationError(f"non-finite affine weights in layer {layer_index}")
        if normalization == "row_l2":
            norms = np.linalg.norm(block, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            block = block / norms
        blocks.append(block)
        slices[layer_index] = (pos, pos + block.shape[0])
        pos += block.shape[0]
    return WeightMatrix(
        matrix=np.concatenate(blocks, axis=0),
        layer_slices=slices,
        normalization=normalization,
    )


def factorize(weight_matrix: WeightMatrix, checkpoint_id: str = "") -> FactorizationResult:
    """SVD of the stacked weight matrix; columns of V are edit directions.

    Each direction's sign is fixed so its largest-magnitude component is
    positive, making curation reproducible across runs.
    """
    mat = weight_matrix.matrix
    if not np.all(np.isfinite(mat)):
        raise FactorizationError("weight matrix has non-finite entries")
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    v = vt.T
    for j in range(v.shape[1]):
        pivot = int(np.argmax(np.abs(v[:, j])))
        if v[pivot, j] < 0:
            v[:, j] = -v[:, j]
            u[:, j] = -u[:, j]
    denom = float(np.linalg.norm(mat))
    if denom > 0:
        err = float(np.linalg.norm(u @ np.diag(s) @ v.T - mat)) / denom
        if err > 1e-5:
            raise FactorizationError(f"reconstruction error {err} exceeds 1e-5")
    scale = max(float(s[0]), 1e-300)
    gaps = np.abs(np.diff(s)) / scale
    degenerate = np.zeros(s.shape[0], dtype=bool)
    close = gaps < DEGENERACY_GAP
    degenerate[:-1] |= close
    degenerate[1:] |= close
    return FactorizationResult(
        directions=v,
        singular_values=s,
        layer_range=sorted(weight_matrix.layer_slices.keys()),
        normalization=weight_matrix.normalization,
        checkpoint_id=checkpoint_id,
        degenerate=degenerate,
    )


def apply_direction(
    w: LatentCode,
    direction: SemanticDirection | np.ndarray,
    magnitude: float,
    layer_range: tuple[int, int] | list[int] | None = None,
) -> LatentCode:
    """w + magnitude * direction; optionally restricted to W+ style rows.

    magnitude 0 returns an exact copy. ``layer_range`` is either a (lo, hi)
    half-open row range or an explicit row index list, valid only for W+.
    """
    w.require("W", "Wplus")
    vector = direction.vector if isinstance(direction, SemanticDirection) else direction
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != w.dim:
        raise FactorizationError(
            f"dimension mismatch: direction {vector.shape} vs latent dim {w.dim}"
        )
    if magnitude == 0.0:
        return w.copy()
    offset = magnitude * vector
    values = w.values.astype(np.float64)  # keep edit arithmetic exactly linear
    if w.space == "W":
        if layer_range is not None:
            raise FactorizationError("layer_range requires a Wplus code")
        values += offset
    else:
        rows = _resolve_rows(layer_range, values.shape[0])
        values[rows] += offset
    return LatentCode(w.space, values)


def _resolve_rows(layer_range, n_rows: int):
    if layer_range is None:
        return slice(None)
    if isinstance(layer_range, tuple) and len(layer_range) == 2:
        lo, hi = int(layer_range[0]), int(layer_range[1])
        if not 0 <= lo < hi <= n_rows:
            raise FactorizationError(f"bad layer_range {layer_range} for {n_rows} rows")
        return slice(lo, hi)
    rows = [int(i) for i in layer_range]
    if any(i < 0 or i >= n_rows for i in rows):
        raise FactorizationError(f"layer_range indices out of [0, {n_rows})")
    return rows


def rank_directions(
    result: FactorizationResult,
    checkpoint: GanCheckpoint | Generator,
    probe_latents: list[LatentCode],
    magnitude: float = 3.0,
    metric: str = "lpips",
    embedder=None,
    indices=None,
) -> list[dict]:
    """Mean image change per direction over probe latents, sorted descending.

    Change is LPIPS (default) or mean absolute pixel difference between the
    probe's synthesis and the synthesis after the directional edit.
    """
    if not probe_latents:
        raise FactorizationError("at least one probe latent required")
    if metric not in ("lpips", "pixel"):
        raise FactorizationError(f"unknown metric {metric!r}")
    generator = (
        checkpoint if isinstance(checkpoint, Generator) else checkpoint.build_generator("ema")
    )
    if embedder is None and metric == "lpips":
        embedder = DeskEmbedder()
    probes = [
        map_latent(generator, p) if p.space == "Z" else p.require("W", "Wplus")
        for p in probe_latents
    ]
    bases = [synthesize(generator, p).pixels for p in probes]
    indices = list(range(result.dim)) if indices is None else [int(i) for i in indices]
    scores = []
    for idx in indices:
        direction = result.direction(idx)
        total = 0.0
        for probe, base in zip(probes, bases):
            edited = synthesize(generator, apply_direction(probe, direction, magnitude)).pixels
            if metric == "lpips":
                total += lpips(base, edited, embedder).value
            else:
                total += float(np.abs(edited - base).mean())
        scores.append({"index": idx, "mean_image_change": total / len(probes)})
    scores.sort(key=lambda r: r["mean_image_change"], reverse=True)
    return scores
