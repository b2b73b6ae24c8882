"""Wireless channel: y = h*x + n with unit-power inputs and exact SNR bookkeeping.

Signals are complex torch tensors whose last dimension indexes symbols; leading
dimensions are treated as a batch of independent signals.
"""

from __future__ import annotations

import math

import torch

from .config import NOISELESS, ChannelConfig


class ChannelError(ValueError):
    pass


def sigma_from_snr(snr_db) -> float:
    """Noise power for unit signal power. ``NOISELESS`` maps to 0."""
    if snr_db == NOISELESS:
        return 0.0
    snr_db = float(snr_db)
    if not math.isfinite(snr_db):
        raise ChannelError(f"snr_db must be finite or the noiseless sentinel, got {snr_db}")
    return 10.0 ** (-snr_db / 10.0)


def snr_from_sigma(sigma2: float) -> float:
    if not sigma2 > 0:
        raise ChannelError(f"noise power must be positive, got {sigma2}")
    return -10.0 * math.log10(sigma2)


def power_normalize(x: torch.Tensor) -> torch.Tensor:
    """Scale each signal (last dim) to mean power 1."""
    if x.shape[-1] < 1:
        raise ChannelError("empty signal")
    power = x.abs().pow(2).mean(dim=-1, keepdim=True)
    if bool((power == 0).any()):
        raise ChannelError("degenerate signal: all symbols are zero")
    return x / power.sqrt()


def real_to_complex(v: torch.Tensor) -> torch.Tensor:
    """Pair consecutive reals (re, im) along the last dim."""
    if v.shape[-1] % 2:
        raise ChannelError(f"real_to_complex needs an even length, got {v.shape[-1]}")
    pairs = v.reshape(*v.shape[:-1], v.shape[-1] // 2, 2)
    return torch.complex(pairs[..., 0].contiguous(), pairs[..., 1].contiguous())


def complex_to_real(s: torch.Tensor) -> torch.Tensor:
    return torch.view_as_real(s).reshape(*s.shape[:-1], 2 * s.shape[-1])


def _generator(seed) -> torch.Generator:
    if isinstance(seed, torch.Generator):
        return seed
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def complex_normal(shape, variance: float, generator: torch.Generator, dtype=torch.float32) -> torch.Tensor:
    """Circularly symmetric complex Gaussian samples with E|z|^2 = variance."""
    scale = math.sqrt(variance / 2.0)
    re = torch.randn(shape, generator=generator, dtype=dtype) * scale
    im = torch.randn(shape, generator=generator, dtype=dtype) * scale
    return torch.complex(re, im)


def transmit(x: torch.Tensor, cfg: ChannelConfig, generator=None, return_h: bool = False):
    """Pass a power-normalized signal through the channel.

    Args:
        x: complex tensor ``(..., k)``.
        cfg: channel settings. ``cfg.seed`` seeds sampling unless ``generator`` is given.
        generator: optional torch.Generator (or int seed) to draw h and n from.
        return_h: also return the sampled coefficient(s), shape ``(..., 1)``.

    Gradients flow through ``x``; the noise and fading draws are constants.
    """
    sigma2 = sigma_from_snr(cfg.snr_db)
    g = _generator(cfg.seed if generator is None else generator)
    real_dtype = x.real.dtype

    if cfg.mode == "awgn":
        h = torch.ones((*x.shape[:-1], 1), dtype=x.dtype)
    elif cfg.mode == "rayleigh_block":
        h = complex_normal((*x.shape[:-1], 1), 1.0, g, dtype=real_dtype)
    else:
        raise ChannelError(f"unknown channel mode {cfg.mode!r}")

    n = complex_normal(tuple(x.shape), sigma2, g, dtype=real_dtype) if sigma2 > 0 else None
    if cfg.mode == "rayleigh_block" and cfg.equalize:
        # perfect CSI: (h*x + n)/h written as x + n/h so the noiseless case is exact
        y = x if n is None else x + n / h
    else:
        hx = x if cfg.mode == "awgn" else h * x
        y = hx if n is None else hx + n
    return (y, h) if return_h else y


class Channel(torch.nn.Module):
    """Module wrapper around :func:`transmit` holding its own seeded stream.

    ``set_snr`` changes the operating point without touching the stream, so a
    training loop can redraw the SNR per batch while noise stays reproducible.
    """

    def __init__(self, cfg: ChannelConfig):
        super().__init__()
        self.cfg = ChannelConfig(**vars(cfg))
        self.generator = _generator(cfg.seed)

    def reseed(self, seed: int) -> None:
        self.generator.manual_seed(int(seed))

    def set_snr(self, snr_db) -> None:
        sigma_from_snr(snr_db)
        self.cfg.snr_db = snr_db

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return transmit(x, self.cfg, generator=self.generator)
