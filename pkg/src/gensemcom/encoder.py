"""Task-agnostic JSCC encoder: (image, selected feature) -> unit-power complex signal."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .channel import power_normalize, real_to_complex
from .geometry import encoder_layout, stage_dims
from .layers import ResidualBlock

BOUND_BITS = 20 * 1024


@dataclass(frozen=True)
class BandwidthReport:
    symbol_count: int
    bits_per_symbol: float
    bits: float
    bound_bits: float

    @property
    def compliant(self) -> bool:
        return self.bits <= self.bound_bits


def bandwidth_bits(cfg, bits_per_symbol: float | None = None, bound_bits: float = BOUND_BITS) -> BandwidthReport:
    """Channel uses per image times bits per symbol, checked against the 20 Kbit budget."""
    bps = cfg.encoder.bits_per_symbol if bits_per_symbol is None else bits_per_symbol
    if bps <= 0:
        raise ValueError("bits_per_symbol must be positive")
    n = encoder_layout(cfg).n_symbols
    return BandwidthReport(n, bps, n * bps, bound_bits)


class JSCCEncoder(nn.Module):
    """concat(I, upsample(f)) -> conv -> residual block -> strided convs -> flatten -> complex."""

    def __init__(self, cfg):
        super().__init__()
        enc = cfg.encoder
        self.layout = encoder_layout(cfg)
        self.feature_dim = stage_dims(cfg)[2]
        self.image_size = (cfg.image.height, cfg.image.width)
        k = enc.kernel
        self.stem = nn.Conv2d(3 + self.feature_dim, enc.hidden_dim, k, padding=k // 2)
        self.act = nn.GELU()
        self.res = ResidualBlock(enc.hidden_dim, k)
        down = []
        for i, s in enumerate(enc.strides):
            last = i == len(enc.strides) - 1
            out = enc.out_channels if last else enc.hidden_dim
            down.append(nn.Conv2d(enc.hidden_dim, out, k, stride=s, padding=k // 2))
            if not last:
                down.append(nn.GELU())
        self.down = nn.Sequential(*down)

    def latent(self, image: torch.Tensor, feature: torch.Tensor) -> torch.Tensor:
        """Real-valued grid before complexification, ``(B, C_out, gh, gw)``."""
        if feature.shape[1] != self.feature_dim:
            raise ValueError(f"feature has {feature.shape[1]} channels, encoder expects {self.feature_dim}")
        up = F.interpolate(feature, size=image.shape[-2:], mode="nearest")
        h = self.act(self.stem(torch.cat([image, up], dim=1)))
        return self.down(self.res(h))

    def forward(self, image: torch.Tensor, feature: torch.Tensor) -> torch.Tensor:
        z = self.latent(image, feature)
        return power_normalize(real_to_complex(z.flatten(1)))
