"""Transmitter source KB.

A three-stage windowed-attention hierarchy produces low/mid/high level maps
``f1, f2, f3`` and a selector fuses the task-relevant ones on the ``f3`` grid.
All maps are channel-first ``(B, C, h, w)``.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .geometry import stage_dims, stage_grids


def _instr_id(instr) -> str:
    ident = getattr(instr, "id", instr)
    if ident not in ("RECONSTRUCT", "SEGMENT"):
        raise ValueError(f"unknown instruction {ident!r}")
    return ident


def window_partition(x: torch.Tensor, ws: int) -> torch.Tensor:
    """(B, H, W, C) -> (B * nW, ws*ws, C)"""
    B, H, W, C = x.shape
    x = x.view(B, H // ws, ws, W // ws, ws, C).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, ws * ws, C)


def window_reverse(windows: torch.Tensor, ws: int, H: int, W: int) -> torch.Tensor:
    B = windows.shape[0] // ((H // ws) * (W // ws))
    x = windows.view(B, H // ws, W // ws, ws, ws, -1).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(B, H, W, -1)


def shifted_window_mask(H: int, W: int, ws: int, shift: int) -> torch.Tensor:
    """Additive mask keeping attention inside each region after a cyclic shift."""
    img = torch.zeros(1, H, W, 1)
    cnt = 0
    for hs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
        for wsl in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
            img[:, hs, wsl, :] = cnt
            cnt += 1
    win = window_partition(img, ws).squeeze(-1)
    diff = win.unsqueeze(1) - win.unsqueeze(2)
    return torch.zeros_like(diff).masked_fill(diff != 0, -1e4)


class WindowAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        Bw, N, C = x.shape
        qkv = self.qkv(x).reshape(Bw, N, 3, self.heads, C // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        if mask is not None:
            nW = mask.shape[0]
            attn = attn.view(Bw // nW, nW, self.heads, N, N) + mask.unsqueeze(1).to(attn.dtype)
            attn = attn.view(Bw, self.heads, N, N)
        attn = attn.softmax(dim=-1)
        return self.proj((attn @ v).transpose(1, 2).reshape(Bw, N, C))


class WindowBlock(nn.Module):
    """Pre-norm transformer block with attention restricted to local windows."""

    def __init__(self, dim: int, heads: int, grid: tuple[int, int], window: int, shift: int, mlp_ratio: float):
        super().__init__()
        self.grid = grid
        self.window = window
        self.shift = shift if min(grid) > window else 0
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        if self.shift:
            self.register_buffer("mask", shifted_window_mask(*grid, window, self.shift), persistent=False)
        else:
            self.mask = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, H, W, C)
        H, W = self.grid
        h = self.norm1(x)
        if self.shift:
            h = torch.roll(h, shifts=(-self.shift, -self.shift), dims=(1, 2))
        h = window_reverse(self.attn(window_partition(h, self.window), self.mask), self.window, H, W)
        if self.shift:
            h = torch.roll(h, shifts=(self.shift, self.shift), dims=(1, 2))
        x = x + h
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Concatenate each 2x2 neighbourhood and project 4C -> 2C (halves the grid)."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x0 = x[:, 0::2, 0::2]
        x1 = x[:, 1::2, 0::2]
        x2 = x[:, 0::2, 1::2]
        x3 = x[:, 1::2, 1::2]
        return self.reduction(self.norm(torch.cat([x0, x1, x2, x3], dim=-1)))


class HierarchicalExtractor(nn.Module):
    """Patch embedding followed by three windowed-attention stages."""

    def __init__(self, cfg):
        super().__init__()
        ex = cfg.extractor
        grids, dims = stage_grids(cfg), stage_dims(cfg)
        self.patch_embed = nn.Conv2d(3, ex.embed_dim, kernel_size=ex.patch_size, stride=ex.patch_size)
        self.embed_norm = nn.LayerNorm(ex.embed_dim)
        self.merges = nn.ModuleList([nn.Identity(), PatchMerging(dims[0]), PatchMerging(dims[1])])
        self.stages = nn.ModuleList()
        for i, (grid, dim, depth) in enumerate(zip(grids, dims, ex.depths)):
            heads = ex.attention_heads * 2**i
            blocks = [
                WindowBlock(dim, heads, grid, ex.window_size,
                            shift=ex.window_size // 2 if (ex.shifted and j % 2) else 0,
                            mlp_ratio=ex.mlp_ratio)
                for j in range(depth)
            ]
            self.stages.append(nn.Sequential(*blocks))

    def forward(self, image: torch.Tensor):
        x = self.embed_norm(self.patch_embed(image).permute(0, 2, 3, 1))
        feats = []
        for merge, stage in zip(self.merges, self.stages):
            x = stage(merge(x))
            feats.append(x.permute(0, 3, 1, 2).contiguous())
        return tuple(feats)


class FeatureSelector(nn.Module):
    """Align each level to the f3 grid (1x1 projection + average pooling) and sum per task."""

    def __init__(self, cfg):
        super().__init__()
        dims = stage_dims(cfg)
        self.out_dim = dims[2]
        self.proj = nn.ModuleList([nn.Conv2d(d, self.out_dim, kernel_size=1) for d in dims])
        self.pool = (4, 2, 1)

    def align(self, level: int, f: torch.Tensor) -> torch.Tensor:
        out = self.proj[level](f)
        k = self.pool[level]
        return F.avg_pool2d(out, k) if k > 1 else out

    def aligned(self, instr, f1, f2, f3) -> dict:
        """Aligned operands the task uses, keyed by level name."""
        ident = _instr_id(instr)
        out = {}
        if ident == "RECONSTRUCT":
            out["f1"] = self.align(0, f1)
        out["f2"] = self.align(1, f2)
        out["f3"] = self.align(2, f3)
        return out

    def forward(self, instr, f1, f2, f3) -> torch.Tensor:
        parts = list(self.aligned(instr, f1, f2, f3).values())
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total


class TransmitterKB(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.extractor = HierarchicalExtractor(cfg)
        self.selector = FeatureSelector(cfg)

    @property
    def out_dim(self) -> int:
        return self.selector.out_dim

    def forward(self, image: torch.Tensor, instr) -> torch.Tensor:
        f1, f2, f3 = self.extractor(image)
        return self.selector(instr, f1, f2, f3)


def extract_hierarchy(image, extractor: HierarchicalExtractor):
    return extractor(image)


def select_features(instr, f1, f2, f3, selector: FeatureSelector):
    return selector(instr, f1, f2, f3)
