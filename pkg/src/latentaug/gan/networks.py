"""Style-based generator and discriminator networks.

The generator follows the style-modulation design: a mapping MLP turns a
Gaussian latent z into a style vector w, and every synthesis convolution is
modulated per-channel by an affine function of w, then demodulated back to
unit weight norm. Skip-connection RGB accumulation replaces progressive
growing. A tanh head pins the output range to [-1, 1].

Weight scaling happens at runtime (weights are stored unit-variance and
multiplied by he-style constants in forward), which is also how the mapping
network's reduced learning rate is implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

INIT_RES = 4


@dataclass
class GeneratorConfig:
    """Architecture knobs. Desk-scale defaults; paper scale uses 512/512/8."""

    latent_dim: int = 64
    mapping_layers: int = 8
    base_channels: int = 128
    resolution: int = 64
    mapping_lr_ratio: float = 0.01
    max_channels: int = 512
    min_channels: int = 8

    def __post_init__(self) -> None:
        if self.resolution < INIT_RES or self.resolution & (self.resolution - 1):
            raise ValueError(f"resolution must be a power of two >= {INIT_RES}")
        if self.mapping_layers < 1:
            raise ValueError("mapping_layers must be >= 1")
        if not 0 < self.mapping_lr_ratio <= 1:
            raise ValueError("mapping_lr_ratio must be in (0, 1]")

    def channels(self, res: int) -> int:
        halvings = max(0, int(math.log2(res)) - 3)  # full width up to 8 px
        ch = self.base_channels >> halvings
        return max(self.min_channels, min(self.max_channels, ch))

    @property
    def levels(self) -> list[int]:
        return [2**k for k in range(2, int(math.log2(self.resolution)) + 1)]


class PixelNorm(nn.Module):
    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


class EqualLinear(nn.Module):
    """Linear layer with runtime weight scaling and optional lr multiplier."""

    def __init__(self, in_dim, out_dim, bias_init=0.0, lr_mul=1.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_dim, in_dim) / lr_mul)
        self.bias = nn.Parameter(torch.full((out_dim,), float(bias_init)))
        self.scale = lr_mul / math.sqrt(in_dim)
        self.lr_mul = lr_mul

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias * self.lr_mul)

    @property
    def effective_weight(self) -> torch.Tensor:
        """The matrix actually multiplying the input at forward time."""
        return self.weight.detach() * self.scale


class MappingNetwork(nn.Module):
    """Z -> W: pixel-normalized input through an MLP at reduced lr."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.norm = PixelNorm()
        self.layers = nn.ModuleList(
            [
                EqualLinear(cfg.latent_dim, cfg.latent_dim, lr_mul=cfg.mapping_lr_ratio)
                for _ in range(cfg.mapping_layers)
            ]
        )

    def forward(self, z):
        h = self.norm(z)
        for layer in self.layers:
            h = F.leaky_relu(layer(h), 0.2) * math.sqrt(2.0)
        return h


class ModulatedConv2d(nn.Module):
    """Convolution with per-sample style modulation and weight demodulation."""

    def __init__(self, in_ch, out_ch, kernel, style_dim, demodulate=True, upsample=False):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.affine = EqualLinear(style_dim, in_ch, bias_init=1.0)
        self.demodulate = demodulate
        self.upsample = upsample
        self.kernel = kernel
        self.out_ch = out_ch
        self.in_ch = in_ch

    def forward(self, x, w, channel_offset=None):
        n = x.shape[0]
        styles = self.affine(w)  # N x in_ch
        weight = self.scale * self.weight.unsqueeze(0) * styles[:, None, :, None, None]
        if self.demodulate:
            dcoef = torch.rsqrt(weight.pow(2).sum(dim=[2, 3, 4]) + 1e-8)
            weight = weight * dcoef[:, :, None, None, None]
        if channel_offset is not None:
            weight = weight * (1.0 + channel_offset)[:, :, None, None, None]
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        h, wd = x.shape[2], x.shape[3]
        x = x.reshape(1, n * self.in_ch, h, wd)
        weight = weight.reshape(n * self.out_ch, self.in_ch, self.kernel, self.kernel)
        out = F.conv2d(x, weight, padding=self.kernel // 2, groups=n)
        return out.reshape(n, self.out_ch, h, wd)

    def style_weight(self) -> torch.Tensor:
        return self.affine.effective_weight


class StyleLayer(nn.Module):
    """Modulated 3x3 conv + noise injection + bias + gained leaky relu."""

    def __init__(self, in_ch, out_ch, style_dim, resolution, upsample, noise_seed):
        super().__init__()
        self.conv = ModulatedConv2d(in_ch, out_ch, 3, style_dim, upsample=upsample)
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.noise_scale = nn.Parameter(torch.zeros(()))
        gen = torch.Generator().manual_seed(noise_seed)
        self.register_buffer("noise", torch.randn(1, 1, resolution, resolution, generator=gen))
        self.resolution = resolution

    def forward(self, x, w, noise_mode="fixed", channel_offset=None):
        out = self.conv(x, w, channel_offset=channel_offset)
        if noise_mode == "fixed":
            noise = self.noise.to(out.dtype)
        elif noise_mode == "random":
            noise = torch.randn(out.shape[0], 1, out.shape[2], out.shape[3], dtype=out.dtype)
        elif noise_mode == "none":
            noise = None
        else:
            raise ValueError(f"unknown noise_mode {noise_mode!r}")
        if noise is not None:
            out = out + self.noise_scale * noise
        return F.leaky_relu(out + self.bias.view(1, -1, 1, 1), 0.2) * math.sqrt(2.0)


class ToRGB(nn.Module):
    def __init__(self, in_ch, style_dim):
        super().__init__()
        self.conv = ModulatedConv2d(in_ch, 3, 1, style_dim, demodulate=False)
        self.bias = nn.Parameter(torch.zeros(3))

    def forward(self, x, w):
        return self.conv(x, w) + self.bias.view(1, -1, 1, 1)


class SynthesisNetwork(nn.Module):
    """Skip-architecture synthesis stack from a learned 4x4 constant.

    Style inputs are consumed in a fixed order: at 4x4 one conv and one RGB
    layer, then (up-conv, conv, RGB) per higher level. ``num_style_inputs``
    is the W+ row count.
    """

    def __init__(self, cfg: GeneratorConfig, noise_seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.const = nn.Parameter(torch.randn(1, cfg.channels(INIT_RES), INIT_RES, INIT_RES))
        self.convs = nn.ModuleList()
        self.rgbs = nn.ModuleList()
        self.conv_resolutions: list[int] = []
        prev = cfg.channels(INIT_RES)
        seed = noise_seed
        for i, res in enumerate(cfg.levels):
            ch = cfg.channels(res)
            if i > 0:
                self.convs.append(
                    StyleLayer(prev, ch, cfg.latent_dim, res, upsample=True, noise_seed=seed)
                )
                self.conv_resolutions.append(res)
                seed += 1
            self.convs.append(
                StyleLayer(ch if i > 0 else prev, ch, cfg.latent_dim, res,
                           upsample=False, noise_seed=seed)
            )
            self.conv_resolutions.append(res)
            seed += 1
            self.rgbs.append(ToRGB(ch, cfg.latent_dim))
            prev = ch

    @property
    def num_style_inputs(self) -> int:
        return len(self.convs) + len(self.rgbs)

    @property
    def num_conv_layers(self) -> int:
        return len(self.convs)

    def forward(self, ws, noise_mode="fixed", weight_offsets=None):
        """ws: N x L x D with L == num_style_inputs; returns N x 3 x R x R."""
        n, num_ws, _ = ws.shape
        if num_ws != self.num_style_inputs:
            raise ValueError(f"need {self.num_style_inputs} style rows, got {num_ws}")
        x = self.const.expand(n, -1, -1, -1).to(ws.dtype)
        rgb = None
        w_idx = 0
        conv_idx = 0
        for level, _res in enumerate(self.cfg.levels):
            n_convs = 1 if level == 0 else 2
            for _ in range(n_convs):
                offset = None
                if weight_offsets is not None and conv_idx in weight_offsets:
                    offset = weight_offsets[conv_idx].to(ws.dtype)
                    if offset.ndim == 1:
                        offset = offset.unsqueeze(0).expand(n, -1)
                x = self.convs[conv_idx](
                    x, ws[:, w_idx], noise_mode=noise_mode, channel_offset=offset
                )
                w_idx += 1
                conv_idx += 1
            y = self.rgbs[level](x, ws[:, w_idx])
            w_idx += 1
            if rgb is None:
                rgb = y
            else:
                rgb = F.interpolate(rgb, scale_factor=2, mode="bilinear", align_corners=False) + y
        return torch.tanh(rgb)


class Generator(nn.Module):
    """Mapping network + synthesis network + stored mean style vector."""

    def __init__(self, cfg: GeneratorConfig, noise_seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.mapping = MappingNetwork(cfg)
        self.synthesis = SynthesisNetwork(cfg, noise_seed=noise_seed)
        self.register_buffer("mean_w", torch.zeros(cfg.latent_dim))

    @property
    def num_style_inputs(self) -> int:
        return self.synthesis.num_style_inputs

    def broadcast(self, w: torch.Tensor) -> torch.Tensor:
        """N x D -> N x L x D by repeating the style for every input slot."""
        return w.unsqueeze(1).expand(-1, self.num_style_inputs, -1)

    def forward(self, z, noise_mode="fixed", truncation_psi=1.0):
        w = self.mapping(z)
        if truncation_psi != 1.0:
            w = self.mean_w.unsqueeze(0) + truncation_psi * (w - self.mean_w.unsqueeze(0))
        return self.synthesis(self.broadcast(w), noise_mode=noise_mode)

    @torch.no_grad()
    def estimate_mean_w(self, n_samples: int = 10_000, seed: int = 0) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        total = torch.zeros(self.cfg.latent_dim, dtype=torch.float64)
        batch = 512
        remaining = n_samples
        while remaining > 0:
            take = min(batch, remaining)
            z = torch.randn(take, self.cfg.latent_dim, generator=gen)
            total += self.mapping(z).sum(dim=0).double()
            remaining -= take
        mean = (total / n_samples).to(self.mean_w.dtype)
        self.mean_w.copy_(mean)
        return mean

    def conv_layer_indices(self, selector="all") -> list[int]:
        """Select synthesis conv layers by index list or coarse/medium/fine band."""
        if isinstance(selector, (list, tuple)):
            indices = [int(i) for i in selector]
        elif selector == "all":
            indices = list(range(self.synthesis.num_conv_layers))
        elif selector in ("coarse", "medium", "fine"):
            bands = {"coarse": (0, 8), "medium": (16, 32), "fine": (64, 4096)}
            lo, hi = bands[selector]
            indices = [
                i
                for i, res in enumerate(self.synthesis.conv_resolutions)
                if lo <= res <= hi
            ]
        else:
            raise ValueError(f"unknown layer selector {selector!r}")
        n = self.synthesis.num_conv_layers
        if not indices:
            raise ValueError(f"layer selector {selector!r} selects no layers")
        if any(i < 0 or i >= n for i in indices):
            raise ValueError(f"layer index out of range [0, {n})")
        return indices

    def style_affine_weights(self, selector="all") -> list[tuple[int, torch.Tensor]]:
        """Effective (C_in x D) style-affine matrices of selected conv layers."""
        return [
            (i, self.synthesis.convs[i].conv.style_weight())
            for i in self.conv_layer_indices(selector)
        ]


class EqualConv2d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, bias=True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.padding = kernel // 2

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias, padding=self.padding)


class DiscriminatorBlock(nn.Module):
    """Residual block halving the resolution."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv0 = EqualConv2d(in_ch, in_ch, 3)
        self.conv1 = EqualConv2d(in_ch, out_ch, 3)
        self.skip = EqualConv2d(in_ch, out_ch, 1, bias=False)

    def forward(self, x):
        h = F.leaky_relu(self.conv0(x), 0.2) * math.sqrt(2.0)
        h = F.avg_pool2d(h, 2)
        h = F.leaky_relu(self.conv1(h), 0.2) * math.sqrt(2.0)
        skip = self.skip(F.avg_pool2d(x, 2))
        return (h + skip) / math.sqrt(2.0)


def minibatch_stddev(x, group_size=4):
    n, _, h, w = x.shape
    g = min(group_size, n)
    while n % g != 0:
        g -= 1
    y = x.reshape(g, n // g, -1)
    std = torch.sqrt(y.var(dim=0, unbiased=False) + 1e-8).mean(dim=1)
    std = std.repeat_interleave(g).view(n, 1, 1, 1).expand(n, 1, h, w)
    return torch.cat([x, std], dim=1)


class Discriminator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        levels = cfg.levels[::-1]  # resolution -> 4
        self.from_rgb = EqualConv2d(3, cfg.channels(levels[0]), 1)
        self.blocks = nn.ModuleList(
            [
                DiscriminatorBlock(cfg.channels(res), cfg.channels(res // 2))
                for res in levels[:-1]
            ]
        )
        final_ch = cfg.channels(INIT_RES)
        self.final_conv = EqualConv2d(final_ch + 1, final_ch, 3)
        self.final_dense = EqualLinear(final_ch * INIT_RES * INIT_RES, final_ch)
        self.out = EqualLinear(final_ch, 1)

    def forward(self, img):
        h = F.leaky_relu(self.from_rgb(img), 0.2) * math.sqrt(2.0)
        for block in self.blocks:
            h = block(h)
        h = minibatch_stddev(h)
        h = F.leaky_relu(self.final_conv(h), 0.2) * math.sqrt(2.0)
        h = F.leaky_relu(self.final_dense(h.flatten(1)), 0.2) * math.sqrt(2.0)
        return self.out(h).squeeze(1)
