"""End-to-end system: source KBs, JSCC encoder, channel, JSCC decoders."""

from __future__ import annotations

import torch
from torch import nn

from .channel import Channel
from .config import ChannelConfig
from .decoders import ReconstructionDecoder, SegmentationDecoder
from .encoder import JSCCEncoder
from .rx_kb import ReceiverKB
from .tx_kb import TransmitterKB, _instr_id


class SemComSystem(nn.Module):
    """Transmitter (tx KB + encoder), channel, receiver (rx KB + task decoders).

    Only decoders for ``cfg.tasks`` are built, so a single-task checkpoint holds
    exactly the parameters that task trains.
    """

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.tx_kb = TransmitterKB(cfg)
        self.encoder = JSCCEncoder(cfg)
        self.channel = Channel(cfg.channel)
        self.rx_kb = ReceiverKB(cfg)
        decoders = {}
        if "RECONSTRUCT" in cfg.tasks:
            decoders["RECONSTRUCT"] = ReconstructionDecoder(cfg, self.rx_kb.channels)
        if "SEGMENT" in cfg.tasks:
            decoders["SEGMENT"] = SegmentationDecoder(cfg, self.rx_kb.channels)
        self.decoders = nn.ModuleDict(decoders)
        self.layout = self.encoder.layout

    @property
    def tasks(self) -> tuple:
        return tuple(self.decoders.keys())

    def decoder(self, instr) -> nn.Module:
        ident = _instr_id(instr)
        if ident not in self.decoders:
            raise ValueError(f"model has no {ident} decoder (built for {self.tasks})")
        return self.decoders[ident]

    def transmit(self, image: torch.Tensor, instr) -> torch.Tensor:
        return self.encoder(image, self.tx_kb(image, instr))

    def receive(self, y: torch.Tensor, instr, steps: int | None = None) -> torch.Tensor:
        feature = self.rx_kb(y, instr)
        dec = self.decoder(instr)
        if isinstance(dec, ReconstructionDecoder):
            return dec(y, feature, steps=steps)
        return dec(y, feature)

    def forward(self, image: torch.Tensor, instr, snr_db=None, steps: int | None = None) -> torch.Tensor:
        self.decoder(instr)
        if snr_db is not None:
            self.channel.set_snr(snr_db)
        x = self.transmit(image, instr)
        y = self.channel(x)
        return self.receive(y, instr, steps=steps)

    def trace(self, image: torch.Tensor, instr) -> dict:
        """Intermediate tensors of one forward pass (for diagnostics)."""
        out = {"image": image}
        f1, f2, f3 = self.tx_kb.extractor(image)
        out.update(f1=f1, f2=f2, f3=f3)
        out["f"] = self.tx_kb.selector(instr, f1, f2, f3)
        out["x"] = self.encoder(image, out["f"])
        out["y"] = self.channel(out["x"])
        out["f_rx"] = self.rx_kb(out["y"], instr)
        out["output"] = self.receive(out["y"], instr)
        return out


def build_system(cfg, channel: ChannelConfig | None = None) -> SemComSystem:
    if channel is not None:
        cfg = cfg.replace(**{f"channel.{k}": v for k, v in vars(channel).items()})
    return SemComSystem(cfg)
