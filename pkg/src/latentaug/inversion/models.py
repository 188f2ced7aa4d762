"""Encoder and hypernetwork models for mapping real images into the GAN.

The encoder predicts a latent code as an offset from the stored mean style
vector (so an untrained encoder reproduces the mean style exactly). The
hypernetwork looks at the target image next to the current reconstruction
and predicts multiplicative per-channel weight offsets for the medium/fine
synthesis convolutions; its heads are zero-initialized, making step 0 an
identity modification of the generator.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..gan.latent import LatentCode
from ..gan.networks import Generator, GeneratorConfig

__all__ = [
    "Encoder",
    "Hypernet",
    "default_hypernet_layers",
    "save_model",
    "load_encoder",
    "load_hypernet",
]


def _conv_stack(in_ch: int, base: int, resolution: int) -> tuple[nn.ModuleList, int]:
    """Stride-2 conv layers from `resolution` down to 4 px."""
    layers = nn.ModuleList()
    ch = in_ch
    out = base
    res = resolution
    while res > 4:
        layers.append(nn.Conv2d(ch, out, 3, stride=2, padding=1))
        ch = out
        out = min(out * 2, 256)
        res //= 2
    return layers, ch


class Encoder(nn.Module):
    """Image -> latent code(s), expressed as offsets from the mean style."""

    def __init__(
        self,
        config: GeneratorConfig,
        num_style_inputs: int,
        mode: str = "Wplus",
        base_channels: int = 32,
        hidden: int = 256,
    ):
        super().__init__()
        if mode not in ("W", "Wplus"):
            raise ValueError(f"encoder mode must be W or Wplus, got {mode!r}")
        self.config = config
        self.mode = mode
        self.num_style_inputs = num_style_inputs
        self.base_channels = base_channels
        self.hidden = hidden
        self.convs, ch = _conv_stack(3, base_channels, config.resolution)
        self.fc = nn.Linear(ch * 16, hidden)
        out_dim = config.latent_dim * (num_style_inputs if mode == "Wplus" else 1)
        self.head = nn.Linear(hidden, out_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.register_buffer("mean_w", torch.zeros(config.latent_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: N,3,R,R -> codes N,L,D (Wplus) or N,D (W)."""
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
        h = F.leaky_relu(self.fc(h.flatten(1)), 0.2)
        offset = self.head(h)
        d = self.config.latent_dim
        if self.mode == "Wplus":
            offset = offset.view(-1, self.num_style_inputs, d)
            return self.mean_w.view(1, 1, d) + offset
        return self.mean_w.view(1, d) + offset

    def encode(self, image) -> LatentCode:
        """Single HxWx3 [-1,1] image (or ImageTensor) to a latent code."""
        pixels = np.asarray(getattr(image, "pixels", image), dtype=np.float32)
        x = torch.from_numpy(pixels).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            codes = self.forward(x)[0]
        return LatentCode(self.mode, codes.numpy())

    def init_kwargs(self) -> dict:
        return {
            "num_style_inputs": self.num_style_inputs,
            "mode": self.mode,
            "base_channels": self.base_channels,
            "hidden": self.hidden,
        }


def default_hypernet_layers(generator: Generator, min_resolution: int = 16) -> list[int]:
    """Conv layers the hypernetwork is allowed to touch (coarse layers frozen)."""
    layers = [
        i
        for i, res in enumerate(generator.synthesis.conv_resolutions)
        if res >= min_resolution
    ]
    if not layers:  # tiny generators: leave the first conv frozen, refine the rest
        layers = list(range(1, generator.synthesis.num_conv_layers))
    return layers


class Hypernet(nn.Module):
    """(target, reconstruction) -> multiplicative per-channel conv weight offsets."""

    def __init__(
        self,
        config: GeneratorConfig,
        target_layers: list[int],
        layer_channels: dict[int, int],
        base_channels: int = 32,
        hidden: int = 256,
    ):
        super().__init__()
        self.config = config
        self.target_layers = [int(i) for i in target_layers]
        self.layer_channels = {int(k): int(v) for k, v in layer_channels.items()}
        self.base_channels = base_channels
        self.hidden = hidden
        self.convs, ch = _conv_stack(6, base_channels, config.resolution)
        self.fc = nn.Linear(ch * 16, hidden)
        self.heads = nn.ModuleDict()
        for i in self.target_layers:
            head = nn.Linear(hidden, self.layer_channels[i])
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
            self.heads[str(i)] = head

    @classmethod
    def for_generator(
        cls, generator: Generator, target_layers: list[int] | None = None, **kwargs
    ) -> "Hypernet":
        layers = target_layers or default_hypernet_layers(generator)
        channels = {i: generator.synthesis.convs[i].conv.out_ch for i in layers}
        return cls(generator.cfg, layers, channels, **kwargs)

    def forward(self, target: torch.Tensor, recon: torch.Tensor) -> dict[int, torch.Tensor]:
        h = torch.cat([target, recon], dim=1)
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
        h = F.leaky_relu(self.fc(h.flatten(1)), 0.2)
        return {i: self.heads[str(i)](h) for i in self.target_layers}

    def init_kwargs(self) -> dict:
        return {
            "target_layers": self.target_layers,
            "layer_channels": self.layer_channels,
            "base_channels": self.base_channels,
            "hidden": self.hidden,
        }


def save_model(model: Encoder | Hypernet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    from dataclasses import asdict

    meta = json.dumps(
        {
            "kind": type(model).__name__,
            "config": asdict(model.config),
            "kwargs": model.init_kwargs(),
        }
    )
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **arrays)
    path.write_bytes(buf.getvalue())
    return path


def _load(path: str | Path, expected_kind: str):
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta["kind"] != expected_kind:
            raise ValueError(f"expected {expected_kind} checkpoint, found {meta['kind']}")
        kwargs = meta["kwargs"]
        config = GeneratorConfig(**meta["config"])
        if expected_kind == "Encoder":
            model = Encoder(config, **kwargs)
        else:
            kwargs["layer_channels"] = {int(k): v for k, v in kwargs["layer_channels"].items()}
            model = Hypernet(config, **kwargs)
        state = {k: torch.from_numpy(data[k]) for k in data.files if k != "__meta__"}
        model.load_state_dict(state)
    model.eval()
    return model


def load_encoder(path: str | Path) -> Encoder:
    return _load(path, "Encoder")


def load_hypernet(path: str | Path) -> Hypernet:
    return _load(path, "Hypernet")
