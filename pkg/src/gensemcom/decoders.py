"""Task-specific JSCC decoders and their training losses.

Reconstruction uses an iterative transformer refiner conditioned on step-index
embeddings: the patch tokens of (y, f~) are refined K times by a shared stack of
attention blocks, then unpatchified, upsampled and polished by a residual block.
Segmentation uses a small residual CNN with a 1x1 classification head.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .geometry import encoder_layout
from .layers import ResidualBlock, sincos_2d, sinusoidal_embedding
from .rx_kb import signal_to_grid

IGNORE_LABEL = 255


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class ReconstructionDecoder(nn.Module):
    def __init__(self, cfg, feature_channels: int):
        super().__init__()
        rd = cfg.recon_decoder
        self.layout = encoder_layout(cfg)
        self.image_size = (cfg.image.height, cfg.image.width)
        self.patch = rd.patch_size
        self.steps = rd.refinement_steps
        self.time_dim = rd.time_embed_dim
        self.channels = rd.channels
        in_ch = self.layout.channels + feature_channels
        gh, gw = self.layout.height // self.patch, self.layout.width // self.patch
        self.token_grid = (gh, gw)

        self.embed = nn.Linear(in_ch * self.patch**2, rd.embed_dim)
        self.register_buffer("pos", sincos_2d(gh, gw, rd.embed_dim).float(), persistent=False)
        self.time_mlp = nn.Sequential(
            nn.Linear(rd.time_embed_dim, rd.embed_dim), nn.GELU(), nn.Linear(rd.embed_dim, rd.embed_dim)
        )
        self.blocks = nn.ModuleList(
            [TransformerBlock(rd.embed_dim, rd.attention_heads, rd.mlp_ratio) for _ in range(rd.depth)]
        )
        self.norm = nn.LayerNorm(rd.embed_dim)
        self.unembed = nn.Linear(rd.embed_dim, rd.channels * self.patch**2)

        scale = self.image_size[0] // self.layout.height
        self.scale = scale
        self.upsample = nn.Sequential(
            nn.Conv2d(rd.channels, rd.channels * scale * scale, 3, padding=1),
            nn.PixelShuffle(scale),
            nn.GELU(),
            nn.Conv2d(rd.channels, 3, 3, padding=1),
        )
        self.refine = ResidualBlock(3, 3, hidden=rd.channels)

    def patchify(self, x: torch.Tensor) -> torch.Tensor:
        B, C, H, W = x.shape
        p = self.patch
        x = x.view(B, C, H // p, p, W // p, p).permute(0, 2, 4, 1, 3, 5)
        return x.reshape(B, (H // p) * (W // p), C * p * p)

    def unpatchify(self, tokens: torch.Tensor) -> torch.Tensor:
        B = tokens.shape[0]
        gh, gw = self.token_grid
        p, C = self.patch, self.channels
        x = tokens.view(B, gh, gw, C, p, p).permute(0, 3, 1, 4, 2, 5)
        return x.reshape(B, C, gh * p, gw * p)

    def time_embedding(self, k: int, dtype) -> torch.Tensor:
        t = torch.tensor([float(k)])
        return self.time_mlp(sinusoidal_embedding(t, self.time_dim).to(dtype))

    def forward(self, y: torch.Tensor, feature: torch.Tensor, steps: int | None = None) -> torch.Tensor:
        steps = self.steps if steps is None else steps
        if steps < 1:
            raise ValueError("refinement steps must be >= 1")
        grid = signal_to_grid(y, self.layout)
        tokens = self.embed(self.patchify(torch.cat([grid, feature], dim=1)))
        pos = self.pos.to(tokens.dtype)
        # step indices count down like a reverse diffusion schedule
        for k in reversed(range(steps)):
            h = tokens + self.time_embedding(k, tokens.dtype) + pos
            for blk in self.blocks:
                h = blk(h)
            tokens = h
        x = self.unpatchify(self.unembed(self.norm(tokens)))
        img = torch.sigmoid(self.upsample(x))
        return self.refine(img).clamp(0.0, 1.0)


class SegmentationDecoder(nn.Module):
    def __init__(self, cfg, feature_channels: int):
        super().__init__()
        sd = cfg.seg_decoder
        self.layout = encoder_layout(cfg)
        self.num_classes = sd.num_classes
        k, c = sd.kernel, sd.channels
        scale = cfg.image.height // self.layout.height
        self.head = nn.Conv2d(self.layout.channels + feature_channels, c, k, padding=k // 2)
        self.act = nn.GELU()
        self.dropout = nn.Dropout2d(sd.dropout)
        self.block1 = ResidualBlock(c, k)
        self.block2 = ResidualBlock(c, k)
        self.upsample = nn.Sequential(
            nn.Conv2d(c, c * scale * scale, k, padding=k // 2), nn.PixelShuffle(scale), nn.GELU()
        )
        self.classifier = nn.Conv2d(c, sd.num_classes, 1)

    def forward(self, y: torch.Tensor, feature: torch.Tensor) -> torch.Tensor:
        """Class logits ``(B, C, H, W)``."""
        grid = signal_to_grid(y, self.layout)
        h = self.dropout(self.act(self.head(torch.cat([grid, feature], dim=1))))
        h = self.block2(self.block1(h))
        return self.classifier(self.upsample(h))


def loss_reconstruction(image: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    """Mean squared error over every pixel value."""
    if image.shape != recon.shape:
        raise ValueError(f"shape mismatch: {tuple(image.shape)} vs {tuple(recon.shape)}")
    return (image - recon).pow(2).mean()


def loss_segmentation(logits: torch.Tensor, mask: torch.Tensor, ignore_label: int = IGNORE_LABEL) -> torch.Tensor:
    """Mean per-pixel softmax cross-entropy; ``ignore_label`` pixels are skipped.

    Args:
        logits: ``(B, C, H, W)`` pre-softmax scores.
        mask: ``(B, H, W)`` integer labels.
    """
    if logits.dim() != 4 or mask.shape != (logits.shape[0], *logits.shape[2:]):
        raise ValueError(f"logits {tuple(logits.shape)} and mask {tuple(mask.shape)} do not match")
    C = logits.shape[1]
    mask = mask.long()
    valid = mask != ignore_label
    if bool((mask[valid] >= C).any()) or bool((mask[valid] < 0).any()):
        raise ValueError(f"mask contains labels outside [0, {C - 1}]")
    lse = torch.logsumexp(logits, dim=1)  # max-subtracted internally
    safe = torch.where(valid, mask, torch.zeros_like(mask))
    true = logits.gather(1, safe.unsqueeze(1)).squeeze(1)
    nll = (lse - true) * valid
    return nll.sum() / valid.sum().clamp(min=1)
