"""Dataset ingestion, image I/O, and the procedural toy lesion corpus.

Labeled collections are described by a line-delimited JSON manifest: the
first record is a header carrying ``class_names`` and ``resolution``, every
following record is ``{"path", "label", "split"}`` with paths relative to
the manifest file. Images live on disk as PNG; in memory every image is a
float32 H x W x 3 array in [-1, 1].

The toy corpus renders lesion-like elliptical blobs on skin-toned
backgrounds from a handful of scalar factors (size, pigment, skin tone,
eccentricity, position). The factors are known ground truth, which is what
makes the downstream factorization and augmentation claims checkable at
desk scale.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "ManifestError",
    "DatasetWriteLockError",
    "ManifestEntry",
    "DatasetManifest",
    "ImageTensor",
    "ToyBlobParams",
    "ToyClassSpec",
    "DEFAULT_TOY_CLASSES",
    "load_manifest",
    "save_manifest",
    "validate_manifest",
    "load_image",
    "save_image",
    "to_uint8",
    "from_uint8",
    "render_toy_blob",
    "make_toy_dataset",
    "lesion_pixel_count",
]

SPLITS = ("train", "val", "test")

# Canonical class list for the dermatoscopy configuration.
DERMATOSCOPY_CLASSES = ["MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"]


class ManifestError(ValueError):
    """Raised when a manifest file violates its invariants."""


class DatasetWriteLockError(RuntimeError):
    """Raised when a second writer targets an output directory in use."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    split: str


@dataclass
class DatasetManifest:
    """A validated image collection: entries plus class list and resolution.

    ``root`` is the directory the entry paths are relative to (the manifest
    file's directory when loaded from disk).
    """

    entries: list[ManifestEntry]
    class_names: list[str]
    resolution: int
    root: Path = field(default_factory=Path)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def split(self, name: str) -> list[ManifestEntry]:
        if name not in SPLITS:
            raise ManifestError(f"unknown split {name!r}")
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def validate(self, check_files: bool = True) -> None:
        if not self.class_names:
            raise ManifestError("class_names must be nonempty")
        if not _is_power_of_two(self.resolution) or not 32 <= self.resolution <= 1024:
            raise ManifestError(
                f"resolution must be a power of two in [32, 1024], got {self.resolution}"
            )
        seen: dict[str, str] = {}
        for e in self.entries:
            if e.split not in SPLITS:
                raise ManifestError(f"bad split {e.split!r} for {e.path}")
            if not 0 <= e.label < self.n_classes:
                raise ManifestError(
                    f"label out of range: {e.label} for {e.path} (K={self.n_classes})"
                )
            prev = seen.get(e.path)
            if prev is not None and prev != e.split:
                raise ManifestError(f"overlapping splits: {e.path} in {prev} and {e.split}")
            seen[e.path] = e.split
            if check_files and not (self.root / e.path).is_file():
                raise ManifestError(f"unresolved path: {e.path}")


@dataclass
class ImageTensor:
    """One image plus the identifier of whatever produced it."""

    pixels: np.ndarray  # H x W x 3 float32 in [-1, 1]
    source_id: str = ""

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {self.pixels.shape}")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a line-delimited manifest file.

    The first line must be the header record. File existence is checked for
    every entry; decodability is deferred to image loading and to
    ``validate_manifest(deep=True)``.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    header: dict | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed record at line {lineno}: {exc}") from exc
            if header is None:
                if "class_names" not in record or "resolution" not in record:
                    raise ManifestError("first record must carry class_names and resolution")
                header = record
                continue
            try:
                entries.append(
                    ManifestEntry(
                        path=str(record["path"]),
                        label=int(record["label"]),
                        split=str(record["split"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"malformed entry at line {lineno}: {record}") from exc
    if header is None:
        raise ManifestError("empty manifest")
    manifest = DatasetManifest(
        entries=entries,
        class_names=[str(c) for c in header["class_names"]],
        resolution=int(header["resolution"]),
        root=path.parent,
    )
    manifest.validate(check_files=check_files)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"class_names": manifest.class_names, "resolution": manifest.resolution})
            + "\n"
        )
        for e in manifest.entries:
            fh.write(json.dumps({"path": e.path, "label": e.label, "split": e.split}) + "\n")
    return path


def validate_manifest(path: str | Path, deep: bool = False) -> DatasetManifest:
    """Full validation; with ``deep`` every referenced image is decoded."""
    manifest = load_manifest(path, check_files=True)
    if deep:
        for e in manifest.entries:
            try:
                with Image.open(manifest.resolve(e)) as img:
                    img.verify()
            except Exception as exc:
                raise ManifestError(f"undecodable image: {e.path} ({exc})") from exc
    return manifest


# ---------------------------------------------------------------------------
# Image I/O ([-1, 1] float <-> PNG)
# ---------------------------------------------------------------------------


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(pixels, dtype=np.float32), -1.0, 1.0)
    return np.round((x + 1.0) * 127.5).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / 127.5 - 1.0).astype(np.float32)


def save_image(pixels: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(pixels)).save(path, format="PNG")
    return path


def load_image(path: str | Path, resolution: int | None = None) -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("RGB")
        if resolution is not None and img.size != (resolution, resolution):
            img = img.resize((resolution, resolution), Image.BILINEAR)
        raw = np.asarray(img, dtype=np.uint8)
    return from_uint8(raw)


def load_split(
    manifest: DatasetManifest, split: str
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Load a whole split into memory as (images, labels, ids)."""
    entries = manifest.split(split)
    if not entries:
        return (
            np.zeros((0, manifest.resolution, manifest.resolution, 3), dtype=np.float32),
            np.zeros((0,), dtype=np.int64),
            [],
        )
    images = np.stack([load_image(manifest.resolve(e), manifest.resolution) for e in entries])
    labels = np.array([e.label for e in entries], dtype=np.int64)
    return images, labels, [e.path for e in entries]


# ---------------------------------------------------------------------------
# Toy blob rendering
# ---------------------------------------------------------------------------

_SKIN_LIGHT = np.array([0.95, 0.80, 0.68], dtype=np.float64)
_SKIN_DARK = np.array([0.45, 0.28, 0.18], dtype=np.float64)
_LESION_CORE = np.array([0.22, 0.12, 0.10], dtype=np.float64)


@dataclass(frozen=True)
class ToyBlobParams:
    """Ground-truth factors of one rendered blob image.

    lesion_radius is a fraction of image width; pigment and skin_tone are
    mixing weights in [0, 1]; eccentricity squeezes the minor axis;
    center_offset shifts the lesion center in fractional coordinates. The
    texture seed drives background speckle and lesion orientation, so the
    full tuple determines the image bit-exactly at a given resolution.
    """

    lesion_radius: float
    lesion_pigment: float
    skin_tone: float
    eccentricity: float = 0.0
    center_offset: tuple[float, float] = (0.0, 0.0)
    texture_seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.lesion_radius <= 0.45:
            raise ValueError(f"lesion_radius out of [0, 0.45]: {self.lesion_radius}")
        if not 0.0 <= self.lesion_pigment <= 1.0:
            raise ValueError(f"lesion_pigment out of [0, 1]: {self.lesion_pigment}")
        if not 0.0 <= self.skin_tone <= 1.0:
            raise ValueError(f"skin_tone out of [0, 1]: {self.skin_tone}")
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError(f"eccentricity out of [0, 1): {self.eccentricity}")
        dx, dy = self.center_offset
        if abs(dx) > 0.4 or abs(dy) > 0.4:
            raise ValueError(f"center_offset out of [-0.4, 0.4]^2: {self.center_offset}")

    @property
    def source_id(self) -> str:
        dx, dy = self.center_offset
        return (
            f"blob(r={self.lesion_radius:.4f},p={self.lesion_pigment:.4f},"
            f"s={self.skin_tone:.4f},e={self.eccentricity:.4f},"
            f"o=({dx:.4f},{dy:.4f}),t={self.texture_seed})"
        )


def render_toy_blob(params: ToyBlobParams, resolution: int) -> ImageTensor:
    """Render one blob image; a pure function of (params, resolution).

    The soft lesion coverage sums to pi * (radius*W)^2 * (1 - eccentricity)
    up to edge antialiasing, which is what the area postcondition measures.
    """
    params.validate()
    rng = np.random.default_rng(params.texture_seed)
    theta = rng.uniform(0.0, math.pi)
    skin_noise = rng.normal(size=(resolution, resolution, 1))
    lesion_noise = rng.normal(size=(resolution, resolution, 1))

    skin_color = _SKIN_LIGHT + params.skin_tone * (_SKIN_DARK - _SKIN_LIGHT)
    lesion_color = skin_color + params.lesion_pigment * (_LESION_CORE - skin_color)

    smooth = ndimage.gaussian_filter(skin_noise[:, :, 0], sigma=resolution / 16.0)
    std = smooth.std()
    if std > 0:
        smooth = smooth / std
    background = skin_color[None, None, :] + 0.015 * smooth[:, :, None]
    lesion = lesion_color[None, None, :] + 0.02 * lesion_noise

    alpha = _lesion_coverage(params, resolution, theta)
    img = background * (1.0 - alpha[:, :, None]) + lesion * alpha[:, :, None]
    pixels = np.clip(img * 2.0 - 1.0, -1.0, 1.0).astype(np.float32)
    return ImageTensor(pixels=pixels, source_id=params.source_id)


def _lesion_coverage(params: ToyBlobParams, resolution: int, theta: float) -> np.ndarray:
    """Antialiased ellipse coverage in [0, 1], ramp centered on the boundary."""
    if params.lesion_radius <= 0.0:
        return np.zeros((resolution, resolution), dtype=np.float64)
    a = params.lesion_radius
    b = a * (1.0 - params.eccentricity)
    cx = 0.5 + params.center_offset[0]
    cy = 0.5 + params.center_offset[1]
    coords = (np.arange(resolution) + 0.5) / resolution
    xx, yy = np.meshgrid(coords, coords)  # xx: column/fraction, yy: row/fraction
    u = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)
    v = -(xx - cx) * math.sin(theta) + (yy - cy) * math.cos(theta)
    d = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    edge_px = 1.5
    ramp = (1.0 - d) * (a * resolution) / edge_px
    return np.clip(0.5 + ramp, 0.0, 1.0)


def lesion_pixel_count(pixels: np.ndarray, margin: float = 0.5) -> int:
    """Count pixels darker than the midpoint between image mean and minimum.

    A crude segmentation that is monotone in lesion area for blob images;
    used to relate latent edits back to the ground-truth size factor.
    """
    intensity = np.asarray(pixels, dtype=np.float64).mean(axis=2)
    lo = intensity.min()
    hi = float(np.median(intensity))
    threshold = lo + margin * (hi - lo)
    return int(np.count_nonzero(intensity < threshold))


# ---------------------------------------------------------------------------
# Toy dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyClassSpec:
    """Per-class sampling ranges for the toy factors."""

    lesion_radius: tuple[float, float] = (0.10, 0.30)
    lesion_pigment: tuple[float, float] = (0.40, 0.90)
    skin_tone: tuple[float, float] = (0.10, 0.70)
    eccentricity: tuple[float, float] = (0.0, 0.4)
    max_center_offset: float = 0.12

    def sample(self, rng: np.random.Generator) -> ToyBlobParams:
        def u(lohi: tuple[float, float]) -> float:
            return float(rng.uniform(lohi[0], lohi[1]))

        return ToyBlobParams(
            lesion_radius=u(self.lesion_radius),
            lesion_pigment=u(self.lesion_pigment),
            skin_tone=u(self.skin_tone),
            eccentricity=u(self.eccentricity),
            center_offset=(
                float(rng.uniform(-self.max_center_offset, self.max_center_offset)),
                float(rng.uniform(-self.max_center_offset, self.max_center_offset)),
            ),
            texture_seed=int(rng.integers(0, 2**31 - 1)),
        )

    @classmethod
    def from_dict(cls, spec: dict) -> "ToyClassSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(spec) - known
        if unknown:
            raise ValueError(f"unknown toy class spec keys: {sorted(unknown)}")
        kwargs = dict(spec)
        for key in ("lesion_radius", "lesion_pigment", "skin_tone", "eccentricity"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


DEFAULT_TOY_CLASSES: dict[str, ToyClassSpec] = {
    "faint-lesion": ToyClassSpec(lesion_pigment=(0.30, 0.55)),
    "dark-lesion": ToyClassSpec(lesion_pigment=(0.65, 0.95)),
}


def make_toy_dataset(
    n_per_class: int,
    class_spec: dict[str, ToyClassSpec],
    seed: int,
    out_dir: str | Path,
    resolution: int = 64,
    split_fracs: tuple[float, float] = (0.1, 0.1),
) -> DatasetManifest:
    """Render a stratified toy dataset to ``out_dir`` and write its manifest.

    ``split_fracs`` are the (val, test) fractions; the remainder is train.
    Generation is deterministic in (class_spec, seed, resolution) and guarded
    by a lock file so only one writer touches the directory at a time.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if not class_spec:
        raise ValueError("class_spec must name at least one class")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise DatasetWriteLockError(f"output directory is locked: {lock_path}") from exc
    try:
        os.close(fd)
        return _generate_toy_dataset(
            n_per_class, class_spec, seed, out_dir, resolution, split_fracs
        )
    finally:
        lock_path.unlink(missing_ok=True)


def _generate_toy_dataset(
    n_per_class: int,
    class_spec: dict[str, ToyClassSpec],
    seed: int,
    out_dir: Path,
    resolution: int,
    split_fracs: tuple[float, float],
) -> DatasetManifest:
    rng = np.random.default_rng(seed)
    n_val = int(n_per_class * split_fracs[0])
    n_test = int(n_per_class * split_fracs[1])
    entries: list[ManifestEntry] = []
    (out_dir / "images").mkdir(exist_ok=True)
    for label, (class_name, spec) in enumerate(class_spec.items()):
        for i in range(n_per_class):
            params = spec.sample(rng)
            rel = f"images/{class_name}_{i:05d}.png"
            save_image(render_toy_blob(params, resolution).pixels, out_dir / rel)
            if i < n_per_class - n_val - n_test:
                split = "train"
            elif i < n_per_class - n_test:
                split = "val"
            else:
                split = "test"
            entries.append(ManifestEntry(path=rel, label=label, split=split))
    manifest = DatasetManifest(
        entries=entries,
        class_names=list(class_spec.keys()),
        resolution=resolution,
        root=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.jsonl")
    manifest.validate(check_files=True)
    return manifest
