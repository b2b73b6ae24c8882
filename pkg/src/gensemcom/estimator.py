"""scikit-learn style front end.

``SemComEstimator`` wraps the whole transmit/receive pipeline: ``fit`` trains it
end to end, ``transform`` returns the unit-power channel symbols, ``predict``
runs the noisy link and decodes, ``score`` reports PSNR or mean IoU.

>>> est = SemComEstimator(task="SEGMENT", epochs=5).fit(images, masks)  # doctest: +SKIP
>>> est.predict(images, snr_db=6.0).shape                                 # doctest: +SKIP
(N, 32, 32)
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import config as config_mod
from .data import ArrayDataset, load_batch, num_batches
from .metrics import ConfusionMatrix, psnr
from .training import fit as fit_system
from .validation import check_images, check_masks


class SemComEstimator(BaseEstimator):
    """End-to-end semantic link as an estimator.

    Parameters
    ----------
    task : {"RECONSTRUCT", "SEGMENT"}
    config : ExperimentConfig, path, or None
        Base configuration; None uses the desk-scale preset for ``task``.
    epochs, learning_rate, batch_size, refinement_steps : optional overrides
    snr_db : float or "noiseless"
        Operating point used by ``predict`` and ``score``.
    random_state : int
        Seeds parameter init, batch order, training noise and evaluation noise.
    """

    def __init__(self, task="RECONSTRUCT", config=None, epochs=None, learning_rate=None, batch_size=None,
                 refinement_steps=None, snr_db=10.0, random_state=0):
        self.task = task
        self.config = config
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.refinement_steps = refinement_steps
        self.snr_db = snr_db
        self.random_state = random_state

    def _build_config(self):
        if self.config is None:
            base = config_mod.desk_config(self.task)
        elif isinstance(self.config, config_mod.ExperimentConfig):
            base = self.config
        else:
            base = config_mod.load_config(self.config)
        overrides = {"training.task": self.task, "training.seed": self.random_state}
        for key, value in (("training.epochs", self.epochs), ("training.learning_rate", self.learning_rate),
                           ("training.batch_size", self.batch_size),
                           ("recon_decoder.refinement_steps", self.refinement_steps)):
            if value is not None:
                overrides[key] = value
        return base.replace(**overrides)

    def fit(self, X, y=None):
        cfg = self._build_config()
        X = check_images(X, cfg.image.height, cfg.image.width)
        masks = None
        if cfg.training.task == "SEGMENT" or cfg.training.joint:
            if y is None:
                raise ValueError("segmentation needs masks passed as y")
            masks = check_masks(y, X, cfg.seg_decoder.num_classes)
        self.config_ = cfg
        self.model_, self.history_ = fit_system(cfg, ArrayDataset(X, masks, cfg.seg_decoder.num_classes))
        self.model_.eval()
        self.n_symbols_ = self.model_.layout.n_symbols
        return self

    def _batches(self, X):
        ds = ArrayDataset(X)
        bs = self.config_.eval.batch_size
        for b in range(num_batches(ds, bs)):
            yield load_batch(ds, bs, b, shuffle=False)[0]

    @torch.no_grad()
    def transform(self, X) -> np.ndarray:
        """Transmitted complex symbols, ``(N, n_symbols_)``."""
        check_is_fitted(self, "model_")
        X = check_images(X, self.config_.image.height, self.config_.image.width)
        return np.concatenate([self.model_.transmit(b, self.task).numpy() for b in self._batches(X)])

    @torch.no_grad()
    def predict(self, X, snr_db=None) -> np.ndarray:
        """Reconstructions ``(N, H, W, 3)`` or label masks ``(N, H, W)``."""
        check_is_fitted(self, "model_")
        X = check_images(X, self.config_.image.height, self.config_.image.width)
        m = self.model_
        m.eval()
        m.channel.set_snr(self.snr_db if snr_db is None else snr_db)
        m.channel.reseed(self.random_state)
        outs = []
        for b in self._batches(X):
            out = m(b, self.task)
            outs.append(out.permute(0, 2, 3, 1).numpy() if self.task == "RECONSTRUCT"
                        else out.argmax(1).numpy().astype(np.uint8))
        return np.concatenate(outs)

    def score(self, X, y=None, snr_db=None) -> float:
        """Mean PSNR (dB) for reconstruction, mean IoU for segmentation."""
        pred = self.predict(X, snr_db=snr_db)
        X = check_images(X)
        if self.task == "RECONSTRUCT":
            return float(np.mean([psnr(a, b) for a, b in zip(X, pred)]))
        if y is None:
            raise ValueError("segmentation scoring needs masks passed as y")
        cm = ConfusionMatrix(self.config_.seg_decoder.num_classes)
        cm.update(pred, check_masks(y, X, self.config_.seg_decoder.num_classes))
        return cm.mean_iou()
