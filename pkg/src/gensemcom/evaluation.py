"""SNR sweeps, CSV reports, plots and side-by-side visualizations."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch

from .data import class_color, load_batch, num_batches
from .encoder import bandwidth_bits
from .metrics import PSNR_INF, ConfusionMatrix, psnr

CSV_FIELDS = (
    "snr_db", "task", "psnr_db", "mse", "mean_iou", "pixel_accuracy",
    "symbol_count", "bits_per_symbol", "bandwidth_bits", "bound_bits", "bound_compliant",
)


def sweep_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@torch.no_grad()
def evaluate_point(model, dataset, task: str, snr_db, seed: int, batch_size: int = 64,
                   steps: int | None = None, max_value: float = 1.0) -> dict:
    """Metrics for one SNR point with the channel noise stream seeded by ``seed``."""
    model.eval()
    model.channel.set_snr(snr_db)
    model.channel.reseed(seed)
    out: dict = {}
    if task == "RECONSTRUCT":
        scores, errs = [], []
        for b in range(num_batches(dataset, batch_size)):
            images, _ = load_batch(dataset, batch_size, b, shuffle=False)
            recon = model(images, task, steps=steps)
            for i in range(images.shape[0]):
                scores.append(psnr(images[i], recon[i], max_value))
                errs.append(float((images[i] - recon[i]).double().pow(2).mean()))
        finite = [s for s in scores if s != PSNR_INF]
        out["psnr_db"] = float(np.mean(finite)) if len(finite) == len(scores) else PSNR_INF
        out["mse"] = float(np.mean(errs))
    else:
        cm = ConfusionMatrix(model.cfg.seg_decoder.num_classes)
        for b in range(num_batches(dataset, batch_size)):
            images, masks = load_batch(dataset, batch_size, b, shuffle=False)
            pred = model(images, task).argmax(dim=1)
            cm.update(pred, masks)
        out["mean_iou"] = cm.mean_iou()
        out["pixel_accuracy"] = cm.pixel_accuracy()
    return out


def sweep(model, dataset, task: str, snr_list, seed: int = 1234, batch_size: int = 64,
          steps: int | None = None, max_value: float = 1.0, bits_per_symbol: float | None = None,
          bound_bits: float = 20 * 1024) -> list[dict]:
    """One row per SNR point, in the order given."""
    bw = bandwidth_bits(model.cfg, bits_per_symbol, bound_bits)
    rows = []
    for i, snr in enumerate(snr_list):
        metrics = evaluate_point(model, dataset, task, snr, sweep_seed(seed, i), batch_size, steps, max_value)
        row = {k: "" for k in CSV_FIELDS}
        row.update(metrics)
        row.update(
            snr_db=snr, task=task, symbol_count=bw.symbol_count, bits_per_symbol=bw.bits_per_symbol,
            bandwidth_bits=bw.bits, bound_bits=bw.bound_bits, bound_compliant=bw.compliant,
        )
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if v == PSNR_INF else repr(v)
    return v


def write_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in CSV_FIELDS})
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_sweep(rows: list[dict], path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    task = rows[0]["task"]
    key, label = ("psnr_db", "PSNR (dB)") if task == "RECONSTRUCT" else ("mean_iou", "mean IoU")
    snrs = [float(r["snr_db"]) for r in rows]
    vals = [float(r[key]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2), dpi=120)
    ax.plot(snrs, vals, marker="o")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def colorize(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    out = np.zeros((*mask.shape, 3), dtype=np.float32)
    for c in np.unique(mask):
        out[mask == c] = 1.0 if c == 255 else class_color(int(c))
    return out


@torch.no_grad()
def visualize(model, dataset, task: str, snr_db, seed: int, path, n: int = 4, steps: int | None = None) -> Path:
    """Rows of original | output (| ground-truth mask) for the first ``n`` items."""
    from .data import save_image

    model.eval()
    model.channel.set_snr(snr_db)
    model.channel.reseed(seed)
    images, masks = load_batch(dataset, min(n, len(dataset)), 0, shuffle=False)
    out = model(images, task, steps=steps)
    rows = []
    for i in range(images.shape[0]):
        orig = images[i].permute(1, 2, 0).numpy()
        if task == "RECONSTRUCT":
            panels = [orig, out[i].permute(1, 2, 0).numpy()]
        else:
            panels = [orig, colorize(masks[i].numpy()), colorize(out[i].argmax(0).numpy())]
        rows.append(np.concatenate(panels, axis=1))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(path, np.concatenate(rows, axis=0))
    return path
