"""Multi-class classifier training and evaluation.

Follows the experimental protocol used throughout: class-balanced batch
sampling, basic flip/cutout augmentations, Adam with weight decay, early
stopping on validation balanced accuracy, and an evaluation report carrying
balanced accuracy (mean per-class recall), per-class recall, one-vs-rest
AUC, and the confusion matrix.

Desk scale uses a compact 6-block CNN; the densely-connected architectures
(densenet121/densenet169) are available through torchvision for paper-scale
runs.
"""

from __future__ import annotations

import math
from pathlib import Path
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.stats import rankdata

from .data import DatasetManifest, load_split

__all__ = [
    "ClassifierConfig",
    "TrainSpec",
    "EvalReport",
    "ExperimentRun",
    "ClassifierTrainingError",
    "build_model",
    "train_classifier",
    "evaluate",
    "predict_scores",
    "run_ablation",
    "binary_auc",
]


class ClassifierTrainingError(RuntimeError):
    pass


@dataclass
class ClassifierConfig:
    n_classes: int
    architecture: str = "small_cnn"
    dropout: float = 0.1
    pretrained_init: bool = False
    width: int = 40  # small_cnn base width (~450k params)

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")


@dataclass
class TrainSpec:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 40
    patience: int = 10
    batch_size: int = 32
    sampling: str = "weighted_oversampling"  # or "uniform"
    hflip: bool = True
    vflip: bool = True
    cutout: bool = True

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be < max_epochs")
        if self.sampling not in ("weighted_oversampling", "uniform"):
            raise ValueError(f"unknown sampling {self.sampling!r}")


class SmallCnn(nn.Module):
    """Six conv blocks with stride-2 downsampling on every other block."""

    def __init__(self, n_classes: int, width: int = 40, dropout: float = 0.1):
        super().__init__()
        widths = [width, width, 2 * width, 2 * width, 4 * width, 4 * width]
        blocks = []
        ch = 3
        for i, w in enumerate(widths):
            stride = 2 if i % 2 == 0 else 1
            blocks += [
                nn.Conv2d(ch, w, 3, stride=stride, padding=1),
                nn.BatchNorm2d(w),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            ch = w
        self.features = nn.Sequential(*blocks)
        self.dropout = nn.Dropout(dropout)
        self.head = nn.Linear(ch, n_classes)

    def forward(self, x):
        h = self.features(x).mean(dim=(2, 3))
        return self.head(self.dropout(h))


def build_model(config: ClassifierConfig) -> nn.Module:
    if config.architecture == "small_cnn":
        return SmallCnn(config.n_classes, width=config.width, dropout=config.dropout)
    if config.architecture in ("densenet121", "densenet169"):
        import torchvision.models as tvm

        ctor = getattr(tvm, config.architecture)
        weights = "IMAGENET1K_V1" if config.pretrained_init else None
        model = ctor(weights=weights, drop_rate=config.dropout)
        model.classifier = nn.Linear(model.classifier.in_features, config.n_classes)
        return model
    raise ValueError(f"unknown architecture {config.architecture!r}")


@dataclass
class EvalReport:
    balanced_accuracy: float
    per_class_recall: np.ndarray  # nan for classes absent from the split
    auc_roc: np.ndarray  # one-vs-rest; nan where undefined
    auc_average: float
    confusion: np.ndarray  # K x K counts, rows = true class
    n_test: int
    undefined_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "per_class_recall": [None if math.isnan(v) else v for v in self.per_class_recall],
            "auc_roc": [None if math.isnan(v) else v for v in self.auc_roc],
            "auc_average": self.auc_average,
            "confusion": self.confusion.tolist(),
            "n_test": self.n_test,
            "undefined_classes": self.undefined_classes,
        }


@dataclass
class ExperimentRun:
    config: ClassifierConfig
    spec: TrainSpec
    seed: int
    dataset: dict = field(default_factory=dict)  # split sizes + per-class counts
    epochs: list[dict] = field(default_factory=list)  # {epoch, train_loss, val_balanced_accuracy}
    best_epoch: int = -1
    best_val_balanced_accuracy: float = float("nan")
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "spec": asdict(self.spec),
            "seed": self.seed,
            "dataset": self.dataset,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_balanced_accuracy": self.best_val_balanced_accuracy,
            "stopped_early": self.stopped_early,
        }


def _augment_batch(x: torch.Tensor, spec: TrainSpec, rng: torch.Generator) -> torch.Tensor:
    if spec.hflip:
        flip = torch.rand(x.shape[0], generator=rng) < 0.5
        x = torch.where(flip.view(-1, 1, 1, 1), x.flip(3), x)
    if spec.vflip:
        flip = torch.rand(x.shape[0], generator=rng) < 0.5
        x = torch.where(flip.view(-1, 1, 1, 1), x.flip(2), x)
    if spec.cutout:
        x = x.clone()
        res = x.shape[2]
        size = max(2, res // 4)
        do = torch.rand(x.shape[0], generator=rng) < 0.5
        tops = torch.randint(0, res - size + 1, (x.shape[0], 2), generator=rng)
        for i in range(x.shape[0]):
            if do[i]:
                r, c = int(tops[i, 0]), int(tops[i, 1])
                x[i, :, r : r + size, c : c + size] = 0.0
        return x
    return x


def _batch_indices(
    labels: np.ndarray, spec: TrainSpec, rng: np.random.Generator, n_batches: int
) -> list[np.ndarray]:
    """Index batches for one epoch; oversampling balances class frequencies."""
    n = labels.shape[0]
    if spec.sampling == "uniform":
        order = rng.permutation(n)
        return [
            order[i : i + spec.batch_size]
            for i in range(0, n_batches * spec.batch_size, spec.batch_size)
        ]
    classes, counts = np.unique(labels, return_counts=True)
    weights = np.zeros(n, dtype=np.float64)
    for cls, count in zip(classes, counts):
        weights[labels == cls] = 1.0 / (len(classes) * count)
    weights /= weights.sum()
    draws = rng.choice(n, size=n_batches * spec.batch_size, replace=True, p=weights)
    return [
        draws[i : i + spec.batch_size]
        for i in range(0, n_batches * spec.batch_size, spec.batch_size)
    ]


def train_classifier(
    manifest: DatasetManifest,
    config: ClassifierConfig,
    spec: TrainSpec,
    seed: int = 0,
    progress=None,
) -> tuple[nn.Module, ExperimentRun]:
    """Train with early stopping; returns the best-validation checkpoint.

    Oversampling applies to train batches only; validation and test are read
    as-is. Raises when a class is missing from the train split under
    weighted oversampling (the balancing weights would be undefined).
    """
    train_x, train_y, _ = load_split(manifest, "train")
    val_x, val_y, _ = load_split(manifest, "val")
    if train_x.shape[0] == 0 or val_x.shape[0] == 0:
        raise ClassifierTrainingError("train and val splits must be nonempty")
    present = set(np.unique(train_y).tolist())
    if spec.sampling == "weighted_oversampling":
        missing = [k for k in range(config.n_classes) if k not in present]
        if missing:
            raise ClassifierTrainingError(
                f"classes {missing} absent from train split: oversampling undefined"
            )

    torch.manual_seed(seed)
    model = build_model(config)
    opt = torch.optim.Adam(model.parameters(), lr=spec.lr, weight_decay=spec.weight_decay)
    xt = torch.from_numpy(train_x).permute(0, 3, 1, 2).contiguous()
    yt = torch.from_numpy(train_y)
    np_rng = np.random.default_rng(seed)
    t_rng = torch.Generator().manual_seed(seed + 1)
    n_batches = max(1, math.ceil(train_x.shape[0] / spec.batch_size))

    run = ExperimentRun(
        config=config,
        spec=spec,
        seed=seed,
        dataset={
            "n_train": int(train_x.shape[0]),
            "n_val": int(val_x.shape[0]),
            "class_counts": np.bincount(train_y, minlength=config.n_classes).tolist(),
            "class_names": list(manifest.class_names),
        },
    )
    best_state = None
    best_acc = -1.0
    best_epoch = -1

    for epoch in range(spec.max_epochs):
        model.train()
        losses = []
        for idx in _batch_indices(train_y, spec, np_rng, n_batches):
            xb = _augment_batch(xt[idx], spec, t_rng)
            logits = model(xb)
            loss = F.cross_entropy(logits, yt[idx])
            if not torch.isfinite(loss):
                raise ClassifierTrainingError(f"training diverged at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(float(loss.item()))
        val_report = evaluate(model, manifest, split="val", _preloaded=(val_x, val_y))
        acc = val_report.balanced_accuracy
        run.epochs.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_balanced_accuracy": acc,
            }
        )
        if progress is not None:
            progress(epoch, acc)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if epoch - best_epoch >= spec.patience:
            run.stopped_early = True
            break

    model.load_state_dict(best_state)
    model.eval()
    run.best_epoch = best_epoch
    run.best_val_balanced_accuracy = best_acc
    return model, run


@torch.no_grad()
def predict_scores(model: nn.Module, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Softmax class scores for H x W x 3 [-1,1] images, shape N x K."""
    model.eval()
    x = torch.from_numpy(np.asarray(images, dtype=np.float32)).permute(0, 3, 1, 2)
    out = []
    for i in range(0, x.shape[0], batch_size):
        out.append(F.softmax(model(x[i : i + batch_size]), dim=1).numpy())
    return np.concatenate(out, axis=0)


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Tie-aware rank AUC; nan when either class is empty.

    Invariant under any strictly monotone transform of the scores.
    """
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(
    model: nn.Module,
    manifest: DatasetManifest,
    split: str = "test",
    _preloaded=None,
) -> EvalReport:
    """Evaluation report over one split.

    Classes absent from the split get nan recall/AUC and are excluded from
    the averaged metrics, flagged in ``undefined_classes``.
    """
    if _preloaded is not None:
        images, labels = _preloaded
    else:
        images, labels, _ = load_split(manifest, split)
    if images.shape[0] == 0:
        raise ValueError(f"empty split {split!r}")
    k = manifest.n_classes
    scores = predict_scores(model, images)
    preds = scores.argmax(axis=1)

    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(labels, preds):
        confusion[int(t), int(p)] += 1
    row_sums = confusion.sum(axis=1)
    recall = np.full(k, np.nan)
    nonzero = row_sums > 0
    recall[nonzero] = confusion[nonzero, np.arange(k)[nonzero]] / row_sums[nonzero]

    auc = np.array([binary_auc(scores[:, c], labels == c) for c in range(k)])
    undefined = sorted(
        set(np.flatnonzero(~nonzero).tolist()) | set(np.flatnonzero(np.isnan(auc)).tolist())
    )
    return EvalReport(
        balanced_accuracy=float(np.nanmean(recall)),
        per_class_recall=recall,
        auc_roc=auc,
        auc_average=float(np.nanmean(auc)) if not np.all(np.isnan(auc)) else float("nan"),
        confusion=confusion,
        n_test=int(images.shape[0]),
        undefined_classes=undefined,
    )


def run_ablation(
    base_manifest: DatasetManifest,
    augmented_manifests: dict[str, DatasetManifest],
    config: ClassifierConfig,
    spec: TrainSpec,
    seeds: list[int],
) -> dict:
    """Train baseline and augmented variants, seed-averaged, with deltas.

    Returns {"rows": [{name, mean_balanced_accuracy, std, delta, reports}],
    "seeds": seeds} with the baseline row first, mirroring an accuracy
    comparison table.
    """
    if not augmented_manifests:
        raise ValueError("at least one augmented manifest required")
    if not seeds:
        raise ValueError("at least one seed required")

    def _evaluate_all(manifest: DatasetManifest) -> tuple[list[float], list[EvalReport]]:
        accs, reports = [], []
        for seed in seeds:
            model, _ = train_classifier(manifest, config, spec, seed=seed)
            report = evaluate(model, manifest, split="test")
            accs.append(report.balanced_accuracy)
            reports.append(report)
        return accs, reports

    rows = []
    base_accs, base_reports = _evaluate_all(base_manifest)
    base_mean = float(np.mean(base_accs))
    rows.append(
        {
            "name": "baseline",
            "mean_balanced_accuracy": base_mean,
            "std": float(np.std(base_accs)),
            "delta": 0.0,
            "per_seed": base_accs,
            "reports": [r.to_dict() for r in base_reports],
        }
    )
    for name, manifest in augmented_manifests.items():
        accs, reports = _evaluate_all(manifest)
        rows.append(
            {
                "name": name,
                "mean_balanced_accuracy": float(np.mean(accs)),
                "std": float(np.std(accs)),
                "delta": float(np.mean(accs) - base_mean),
                "per_seed": accs,
                "reports": [r.to_dict() for r in reports],
            }
        )
    return {"rows": rows, "seeds": list(seeds)}


def save_classifier(model: nn.Module, config: ClassifierConfig, path: str | Path) -> Path:
    """Persist weights + config as one torch archive."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"config": asdict(config), "state": model.state_dict()}, path)
    return path


def load_classifier(path: str | Path) -> tuple[nn.Module, ClassifierConfig]:
    payload = torch.load(Path(path), weights_only=True)
    config = ClassifierConfig(**payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["state"])
    model.eval()
    return model, config


def ablation_table_csv(result: dict) -> str:
    """Delimiter-separated comparison table (dataset rows, accuracy columns)."""
    lines = ["name,mean_balanced_accuracy,std,delta"]
    for row in result["rows"]:
        lines.append(
            f"{row['name']},{row['mean_balanced_accuracy']:.4f},"
            f"{row['std']:.4f},{row['delta']:+.4f}"
        )
    return "\n".join(lines) + "\n"
