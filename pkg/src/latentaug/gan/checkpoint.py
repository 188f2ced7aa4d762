"""Checkpoint serialization: named float arrays + a JSON metadata header.

A checkpoint stores the raw generator, its exponential-moving-average copy
(used for sampling, factorization, and inversion), the discriminator, the
training step, the periodic FID log, and the per-step loss log. Arrays
round-trip bit-exactly through ``numpy.savez``.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .networks import Discriminator, Generator, GeneratorConfig

_META_KEY = "__meta__"


@dataclass
class GanCheckpoint:
    config: GeneratorConfig
    step: int
    arrays: dict[str, np.ndarray]
    fid_history: list[tuple[int, float]] = field(default_factory=list)
    training_log: list[dict] = field(default_factory=list)

    @classmethod
    def from_models(
        cls,
        config: GeneratorConfig,
        step: int,
        generator: Generator,
        generator_ema: Generator,
        discriminator: Discriminator,
        fid_history=None,
        training_log=None,
    ) -> "GanCheckpoint":
        arrays: dict[str, np.ndarray] = {}
        for prefix, model in (
            ("g", generator),
            ("g_ema", generator_ema),
            ("d", discriminator),
        ):
            for name, tensor in model.state_dict().items():
                arrays[f"{prefix}/{name}"] = tensor.detach().cpu().numpy().copy()
        return cls(
            config=config,
            step=step,
            arrays=arrays,
            fid_history=list(fid_history or []),
            training_log=list(training_log or []),
        )

    def _load_into(self, model: torch.nn.Module, prefix: str) -> None:
        state = {
            name[len(prefix) + 1 :]: torch.from_numpy(arr)
            for name, arr in self.arrays.items()
            if name.startswith(prefix + "/")
        }
        model.load_state_dict(state)

    def build_generator(self, which: str = "ema") -> Generator:
        if which not in ("ema", "raw"):
            raise ValueError("which must be 'ema' or 'raw'")
        gen = Generator(self.config)
        self._load_into(gen, "g_ema" if which == "ema" else "g")
        gen.eval()
        for p in gen.parameters():
            p.requires_grad_(False)
        return gen

    def build_discriminator(self) -> Discriminator:
        disc = Discriminator(self.config)
        self._load_into(disc, "d")
        disc.eval()
        return disc

    @property
    def mean_w(self) -> np.ndarray:
        return self.arrays["g_ema/mean_w"]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = json.dumps(
            {
                "config": asdict(self.config),
                "step": self.step,
                "fid_history": [[int(s), float(v)] for s, v in self.fid_history],
                "training_log": self.training_log,
            }
        )
        buf = io.BytesIO()
        np.savez(buf, **{_META_KEY: np.frombuffer(meta.encode("utf-8"), dtype=np.uint8)},
                 **self.arrays)
        path.write_bytes(buf.getvalue())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "GanCheckpoint":
        with np.load(Path(path)) as data:
            meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
            arrays = {k: data[k] for k in data.files if k != _META_KEY}
        return cls(
            config=GeneratorConfig(**meta["config"]),
            step=int(meta["step"]),
            arrays=arrays,
            fid_history=[(int(s), float(v)) for s, v in meta["fid_history"]],
            training_log=meta.get("training_log", []),
        )
