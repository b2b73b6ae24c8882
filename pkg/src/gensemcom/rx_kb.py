"""Receiver source KB: residual feature generation from the noisy signal and task selection."""

from __future__ import annotations

import torch
from torch import nn

from .channel import complex_to_real
from .geometry import encoder_layout
from .layers import ResidualBlock, unflatten_signal
from .tx_kb import _instr_id


def signal_to_grid(y: torch.Tensor, layout) -> torch.Tensor:
    return unflatten_signal(complex_to_real(y), layout)


class ReceiverKB(nn.Module):
    """Input conv to ``channels``, then two residual blocks; ``g1``/``g2`` are their outputs."""

    def __init__(self, cfg):
        super().__init__()
        self.layout = encoder_layout(cfg)
        c, k = cfg.rx_kb.channels, cfg.rx_kb.kernel
        self.stem = nn.Conv2d(self.layout.channels, c, k, padding=k // 2)
        self.block1 = ResidualBlock(c, k)
        self.block2 = ResidualBlock(c, k)

    @property
    def channels(self) -> int:
        return self.stem.out_channels

    def generate(self, y: torch.Tensor):
        x = self.stem(signal_to_grid(y, self.layout))
        g1 = self.block1(x)
        g2 = self.block2(g1)
        return g1, g2

    @staticmethod
    def select(instr, g1: torch.Tensor, g2: torch.Tensor) -> torch.Tensor:
        if _instr_id(instr) == "SEGMENT":
            return g1
        return g1 + g2

    def forward(self, y: torch.Tensor, instr) -> torch.Tensor:
        if _instr_id(instr) == "SEGMENT":
            # block 2 is not needed for segmentation
            x = self.stem(signal_to_grid(y, self.layout))
            return self.block1(x)
        return self.select(instr, *self.generate(y))


def generate_features(y, rx: ReceiverKB):
    return rx.generate(y)


def select_rx_features(instr, g1, g2):
    return ReceiverKB.select(instr, g1, g2)
