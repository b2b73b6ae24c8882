"""End-to-end training with decoupled weight decay Adam, seeded throughout."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_batch, make_dataset, num_batches
from .decoders import loss_reconstruction, loss_segmentation
from .pipeline import SemComSystem

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "loss", "lr", "wall_time")


class NumericalError(RuntimeError):
    """Non-finite loss or gradient; message lists per-module output norms."""


def build_optimizer(model: torch.nn.Module, tcfg) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(), lr=tcfg.learning_rate, betas=(tcfg.beta1, tcfg.beta2),
        weight_decay=tcfg.weight_decay,
    )


def task_loss(model: SemComSystem, instr, images, masks, steps=None) -> torch.Tensor:
    out = model(images, instr, steps=steps)
    ident = getattr(instr, "id", instr)
    if ident == "RECONSTRUCT":
        return loss_reconstruction(images, out)
    if masks is None:
        raise ValueError("segmentation training needs masks")
    return loss_segmentation(out, masks)


def output_norms(model: SemComSystem, images, instr) -> dict:
    with torch.no_grad():
        trace = model.trace(images, instr)
    return {k: float(v.abs().pow(2).sum().sqrt()) for k, v in trace.items()}


def train_step(model: SemComSystem, optimizer, batch, instr, snr_db=None) -> float:
    """One forward/backward/update. Noise is drawn inside the channel and not differentiated."""
    images, masks = batch
    model.train()
    if snr_db is not None:
        model.channel.set_snr(snr_db)
    optimizer.zero_grad()
    loss = task_loss(model, instr, images, masks)
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss.item()}; output norms {output_norms(model, images, instr)}")
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NumericalError(f"non-finite gradient in {name}; output norms {output_norms(model, images, instr)}")
    optimizer.step()
    return float(loss.detach())


class SNRSampler:
    def __init__(self, tcfg):
        self.policy = tcfg.snr_policy
        self.fixed = tcfg.snr_db
        self.low, self.high = tcfg.snr_range
        self.rng = np.random.default_rng([tcfg.seed, 17])

    def __call__(self) -> float:
        if self.policy == "fixed":
            return float(self.fixed)
        return float(self.rng.uniform(self.low, self.high))


def build_model(cfg, seed: int | None = None) -> SemComSystem:
    torch.manual_seed(cfg.training.seed if seed is None else seed)
    model = SemComSystem(cfg)
    model.channel.reseed(cfg.training.seed)
    return model


def fit(cfg, dataset=None, model: SemComSystem | None = None, log_path=None, checkpoint_path=None,
        progress=None):
    """Train ``cfg.training.epochs`` epochs; returns ``(model, history)``.

    History rows carry ``epoch, loss, lr, wall_time``; ``wall_time`` is the only
    field that differs between two runs with the same seed.
    """
    t = cfg.training
    dataset = make_dataset(cfg, "train") if dataset is None else dataset
    model = build_model(cfg) if model is None else model
    optimizer = build_optimizer(model, t)
    snr = SNRSampler(t)
    nb = num_batches(dataset, t.batch_size)
    scheduler = None
    if t.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=max(1, t.epochs * nb))
    tasks = cfg.tasks
    history = []
    writer = None
    fh = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
    start = time.perf_counter()
    step = 0
    try:
        for epoch in range(t.epochs):
            losses = []
            for b in range(nb):
                batch = load_batch(dataset, t.batch_size, b, epoch=epoch, seed=t.seed, flip=cfg.data.flip)
                instr = tasks[step % len(tasks)]
                losses.append(train_step(model, optimizer, batch, instr, snr_db=snr()))
                if scheduler is not None:
                    scheduler.step()
                step += 1
                if t.log_every and step % t.log_every == 0:
                    log.info("step %d loss %.5f", step, losses[-1])
            row = {
                "epoch": epoch + 1,
                "loss": f"{float(np.mean(losses)):.8e}",
                "lr": f"{optimizer.param_groups[0]['lr']:.3e}",
                "wall_time": f"{time.perf_counter() - start:.2f}",
            }
            history.append(row)
            if writer is not None:
                writer.writerow(row)
                fh.flush()
            if progress is not None:
                progress(row)
    finally:
        if fh is not None:
            fh.close()
    if checkpoint_path is not None:
        save_model(model, cfg, checkpoint_path, meta={"epochs": t.epochs})
    return model, history


def save_model(model: SemComSystem, cfg, path, meta: dict | None = None):
    return save_checkpoint(path, model.state_dict(), cfg.to_dict(), cfg.model_hash(), meta)


def load_model(path, cfg=None, force: bool = False):
    """Rebuild a system from a checkpoint; ``cfg`` defaults to the embedded config."""
    state, header = load_checkpoint(path, None if cfg is None else cfg.model_hash(), force=force)
    if cfg is None:
        cfg = config_mod.from_dict(header["config"])
        config_mod.validate(cfg)
    model = SemComSystem(cfg)
    model.load_state_dict(state, strict=not force)
    model.eval()
    return model, cfg, header
