"""Shape bookkeeping shared by the modules and config validation."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Layout:
    """Shape of the transmitted latent as a grid; travels with the config to the receiver."""

    channels: int
    height: int
    width: int

    @property
    def n_reals(self) -> int:
        return self.channels * self.height * self.width

    @property
    def n_symbols(self) -> int:
        return self.n_reals // 2


def stage_grids(cfg) -> list[tuple[int, int]]:
    """Spatial grids of the three extractor stages (patch embed, then two merges)."""
    p = cfg.extractor.patch_size
    h, w = cfg.image.height // p, cfg.image.width // p
    return [(h, w), (h // 2, w // 2), (h // 4, w // 4)]


def stage_dims(cfg) -> list[int]:
    d = cfg.extractor.embed_dim
    return [d, 2 * d, 4 * d]


def encoder_layout(cfg) -> Layout:
    factor = math.prod(cfg.encoder.strides)
    return Layout(cfg.encoder.out_channels, cfg.image.height // factor, cfg.image.width // factor)


def check_geometry(cfg) -> None:
    """Validate every divisibility constraint up front so forward passes never hit one."""
    from .config import ConfigError

    H, W = cfg.image.height, cfg.image.width
    ex = cfg.extractor
    if H < 1 or W < 1:
        raise ConfigError("image size must be positive")
    if H % ex.patch_size or W % ex.patch_size:
        raise ConfigError(f"image {H}x{W} not divisible by extractor.patch_size={ex.patch_size}")
    if ex.embed_dim % ex.attention_heads:
        raise ConfigError("extractor.embed_dim must be divisible by extractor.attention_heads")
    if len(ex.depths) != 3 or min(ex.depths) < 1:
        raise ConfigError("extractor.depths needs three positive entries")
    h, w = H // ex.patch_size, W // ex.patch_size
    if h % 4 or w % 4:
        raise ConfigError(f"stage-1 grid {h}x{w} cannot be halved twice by patch merging")
    for i, (gh, gw) in enumerate(stage_grids(cfg), start=1):
        if gh % ex.window_size or gw % ex.window_size:
            raise ConfigError(
                f"stage-{i} grid {gh}x{gw} not divisible by extractor.window_size={ex.window_size}"
            )

    enc = cfg.encoder
    if not enc.strides or min(enc.strides) < 1:
        raise ConfigError("encoder.strides must be positive integers")
    factor = math.prod(enc.strides)
    if H % factor or W % factor:
        raise ConfigError(f"image {H}x{W} not divisible by total encoder stride {factor}")
    layout = encoder_layout(cfg)
    if layout.n_reals < 2:
        raise ConfigError("encoder produces no channel symbols")
    if layout.n_reals % 2:
        raise ConfigError(f"encoder emits {layout.n_reals} reals; need an even count for complex pairing")
    if enc.bits_per_symbol <= 0:
        raise ConfigError("encoder.bits_per_symbol must be positive")

    rd = cfg.recon_decoder
    if rd.embed_dim % rd.attention_heads:
        raise ConfigError("recon_decoder.embed_dim must be divisible by recon_decoder.attention_heads")
    if layout.height % rd.patch_size or layout.width % rd.patch_size:
        raise ConfigError(
            f"encoder grid {layout.height}x{layout.width} not divisible by recon_decoder.patch_size"
        )
    if rd.embed_dim % 4:
        raise ConfigError("recon_decoder.embed_dim must be divisible by 4 (2-D position encoding)")
    if rd.time_embed_dim % 2:
        raise ConfigError("recon_decoder.time_embed_dim must be even")
