"""PSNR, IoU, mean IoU and pixel accuracy. Inputs may be numpy arrays or tensors."""

from __future__ import annotations

import math

import numpy as np

IGNORE_LABEL = 255
PSNR_INF = math.inf


def _np(a) -> np.ndarray:
    if hasattr(a, "detach"):
        a = a.detach().cpu().numpy()
    return np.asarray(a)


def mse(image, recon) -> float:
    a, b = _np(image).astype(np.float64), _np(recon).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(image, recon, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``PSNR_INF``."""
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    err = mse(image, recon)
    if err == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(max_value**2 / err)


def _valid(pred, truth, ignore_label):
    p, t = _np(pred), _np(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    keep = t != ignore_label
    return p[keep], t[keep]


def iou(pred, truth, class_id: int, ignore_label: int = IGNORE_LABEL) -> float | None:
    """|A and B| / |A or B| for one class; ``None`` when the class is absent from both."""
    p, t = _valid(pred, truth, ignore_label)
    a, b = p == class_id, t == class_id
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return None
    return np.count_nonzero(a & b) / union


def per_class_iou(pred, truth, num_classes: int, ignore_label: int = IGNORE_LABEL) -> list:
    return [iou(pred, truth, c, ignore_label) for c in range(num_classes)]


def mean_iou(pred, truth, num_classes: int, ignore_label: int = IGNORE_LABEL) -> float:
    """Average IoU over the classes present in prediction or ground truth."""
    vals = [v for v in per_class_iou(pred, truth, num_classes, ignore_label) if v is not None]
    if not vals:
        raise ValueError("mean IoU undefined: no class present in prediction or ground truth")
    return float(np.mean(vals))


def pixel_accuracy(pred, truth, ignore_label: int = IGNORE_LABEL) -> float:
    p, t = _valid(pred, truth, ignore_label)
    if p.size == 0:
        raise ValueError("pixel accuracy undefined: every pixel is ignored")
    return float(np.mean(p == t))


class ConfusionMatrix:
    """Accumulates pixel counts over batches so dataset-level IoU is exact."""

    def __init__(self, num_classes: int, ignore_label: int = IGNORE_LABEL):
        self.num_classes = num_classes
        self.ignore_label = ignore_label
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred, truth) -> None:
        p, t = _valid(pred, truth, self.ignore_label)
        idx = t.astype(np.int64) * self.num_classes + p.astype(np.int64)
        self.counts += np.bincount(idx, minlength=self.num_classes**2).reshape(self.num_classes, -1)

    def ious(self) -> list:
        inter = np.diag(self.counts)
        union = self.counts.sum(0) + self.counts.sum(1) - inter
        return [None if u == 0 else float(i / u) for i, u in zip(inter, union)]

    def mean_iou(self) -> float:
        vals = [v for v in self.ious() if v is not None]
        if not vals:
            raise ValueError("mean IoU undefined: no class present")
        return float(np.mean(vals))

    def pixel_accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else math.nan
