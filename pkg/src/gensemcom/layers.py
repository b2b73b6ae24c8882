import math

import torch
from torch import nn


class ResidualBlock(nn.Module):
    """``out = x + conv(act(conv(x)))`` with same-size 3x3 (by default) convolutions."""

    def __init__(self, channels: int, kernel: int = 3, hidden: int | None = None):
        super().__init__()
        hidden = hidden or channels
        self.conv1 = nn.Conv2d(channels, hidden, kernel, padding=kernel // 2)
        self.act = nn.GELU()
        self.conv2 = nn.Conv2d(hidden, channels, kernel, padding=kernel // 2)

    def branch(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.act(self.conv1(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.branch(x)


def zero_residual_branches(module: nn.Module) -> None:
    """Zero the second conv of every residual block so each block is the identity."""
    for m in module.modules():
        if isinstance(m, ResidualBlock):
            nn.init.zeros_(m.conv2.weight)
            nn.init.zeros_(m.conv2.bias)


def sinusoidal_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sin/cos features of a (batch of) scalar step index, shape ``(len(t), dim)``."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def sincos_2d(grid_h: int, grid_w: int, dim: int) -> torch.Tensor:
    """Fixed 2-D sinusoidal position table, shape ``(grid_h * grid_w, dim)``."""
    if dim % 4:
        raise ValueError("2-D sin/cos position encoding needs dim divisible by 4")
    ys, xs = torch.meshgrid(torch.arange(grid_h), torch.arange(grid_w), indexing="ij")
    emb_y = sinusoidal_embedding(ys.flatten(), dim // 2)
    emb_x = sinusoidal_embedding(xs.flatten(), dim // 2)
    return torch.cat([emb_y, emb_x], dim=-1)


def unflatten_signal(real: torch.Tensor, layout) -> torch.Tensor:
    """(B, n_reals) -> (B, C, h, w) using the shipped layout."""
    if real.shape[-1] != layout.n_reals:
        raise ValueError(
            f"signal carries {real.shape[-1]} reals but layout "
            f"{layout.channels}x{layout.height}x{layout.width} needs {layout.n_reals}"
        )
    return real.reshape(real.shape[0], layout.channels, layout.height, layout.width)
