"""Scikit-learn style wrapper so the segmenter drops into pipelines.

``fit`` trains the network on (images, masks) arrays, ``predict`` returns
per-pixel category masks, and ``score`` reports mean IoU.  Constructor
arguments follow the sklearn convention (stored verbatim, validated in
``fit``), so ``get_params``/``set_params``/``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .metrics import ConfusionMatrix, accumulate, compute_metrics
from .model import AblationConfig, GdgtConfig
from .tensor import Tensor, softmax
from .training import TrainConfig, train
from .validation import check_image_batch, check_mask_batch


class GdgtSegmenter(BaseEstimator):
    """Trainable sea-ice segmenter with a fit/predict/score surface."""

    def __init__(self, input_size=64, stage_channels=(16, 32, 64, 128),
                 window=4, heads=2, use_glff=True, dgd_mode="full",
                 lr=6e-4, epochs=12, batch_size=8, optimizer="adam",
                 lr_schedule="constant", seed=0, verbose=False):
        self.input_size = input_size
        self.stage_channels = stage_channels
        self.window = window
        self.heads = heads
        self.use_glff = use_glff
        self.dgd_mode = dgd_mode
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.lr_schedule = lr_schedule
        self.seed = seed
        self.verbose = verbose

    def _model_config(self) -> GdgtConfig:
        cfg = GdgtConfig(
            input_size=self.input_size,
            stage_channels=tuple(self.stage_channels),
            num_stages=len(self.stage_channels),
            window=self.window,
            heads=self.heads,
            ablation=AblationConfig(use_glff=self.use_glff,
                                    dgd_mode=self.dgd_mode),
        )
        cfg.validate()
        return cfg

    def fit(self, X, y):
        """Train on images X (N,3,S,S) and integer masks y (N,S,S)."""
        from .data import Scene

        cfg = self._model_config()
        X = check_image_batch(X, input_size=cfg.input_size)
        y = check_mask_batch(y, cfg.num_categories, like=X)
        scenes = [Scene(img, msk, {"source": f"array-{i}"})
                  for i, (img, msk) in enumerate(zip(X, y))]
        train_cfg = TrainConfig(lr=self.lr, epochs=self.epochs,
                                batch_size=self.batch_size, seed=self.seed,
                                optimizer=self.optimizer,
                                lr_schedule=self.lr_schedule)
        result = train(cfg, train_cfg, scenes=scenes, verbose=self.verbose)
        self.net_ = result.net
        self.history_ = result.history
        self.best_miou_ = result.best_miou
        self.n_categories_ = cfg.num_categories
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("this GdgtSegmenter is not fitted yet")

    def predict(self, X) -> np.ndarray:
        """Per-pixel category masks, shaped (N, S, S)."""
        self._check_fitted()
        X = check_image_batch(X, input_size=self.net_.config.input_size)
        out = []
        for start in range(0, len(X), self.batch_size):
            out.append(self.net_.predict(X[start:start + self.batch_size]))
        return np.concatenate(out, axis=0)

    def predict_proba(self, X) -> np.ndarray:
        """Per-pixel category probabilities, shaped (N, K, S, S)."""
        self._check_fitted()
        X = check_image_batch(X, input_size=self.net_.config.input_size)
        out = []
        for start in range(0, len(X), self.batch_size):
            logits = self.net_.predict_logits(X[start:start + self.batch_size])
            out.append(softmax(Tensor(logits), axis=1).data)
        return np.concatenate(out, axis=0)

    def score(self, X, y) -> float:
        """Mean IoU of predictions against reference masks."""
        self._check_fitted()
        X = check_image_batch(X, input_size=self.net_.config.input_size)
        y = check_mask_batch(y, self.n_categories_, like=X)
        cm = ConfusionMatrix(self.n_categories_)
        accumulate(cm, self.predict(X), y)
        return compute_metrics(cm)["miou"]
