"""Scikit-learn style estimator wrapping training and inference.

``MBNetRegressor`` exposes the usual ``fit`` / ``predict`` / ``get_params``
surface so the predictor composes with pipeline and model-selection tooling.
``X`` is a :class:`~mosbench.corpus.Corpus` (labels live inside the corpus
as judge ratings, so ``y`` is never passed separately).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Corpus, CorpusEntry, split_corpus
from .errors import ValidationError
from .evaluation import MEAN_ONLY, MetricsReport, evaluate, predict_utterance
from .model import ArchConfig
from .objective import LossConfig
from .training import TrainConfig, train


class MBNetRegressor(BaseEstimator):
    """Mean-bias MOS predictor with a fit/predict interface.

    Parameters mirror :class:`~mosbench.training.TrainConfig`; ``arch`` and
    ``loss`` may be left ``None`` to use the package defaults. After ``fit``
    the trained bundle is available as ``predictor_`` and the per-epoch
    losses as ``history_``.
    """

    def __init__(
        self,
        arch: ArchConfig | None = None,
        loss: LossConfig | None = None,
        batch_size: int = 64,
        learning_rate: float = 1e-4,
        epochs: int = 50,
        seed: int = 0,
        disable_biasnet: bool = False,
        disable_meannet: bool = False,
        disable_clipping: bool = False,
        zero_padding: bool = False,
        val_fraction: float = 0.1,
        inference_mode: str = MEAN_ONLY,
        inference_seed: int = 0,
    ) -> None:
        self.arch = arch
        self.loss = loss
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.disable_biasnet = disable_biasnet
        self.disable_meannet = disable_meannet
        self.disable_clipping = disable_clipping
        self.zero_padding = zero_padding
        self.val_fraction = val_fraction
        self.inference_mode = inference_mode
        self.inference_seed = inference_seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            loss=self.loss if self.loss is not None else LossConfig(),
            arch=self.arch if self.arch is not None else ArchConfig(),
            disable_biasnet=self.disable_biasnet,
            disable_meannet=self.disable_meannet,
            disable_clipping=self.disable_clipping,
            zero_padding=self.zero_padding,
        )

    def fit(self, X: Corpus, y=None, val: Corpus | None = None) -> "MBNetRegressor":
        """Train on a rated corpus.

        When no validation corpus is supplied, ``val_fraction`` of the
        entries is carved off deterministically (seeded by ``seed``) for
        checkpoint selection.
        """
        if not isinstance(X, Corpus):
            raise ValidationError("X must be a Corpus")
        train_corpus = X
        if val is None:
            if not 0.0 < self.val_fraction < 1.0:
                raise ValidationError("val_fraction must be in (0, 1) when val is not given")
            n_val = max(1, round(len(X) * self.val_fraction))
            if n_val >= len(X):
                raise ValidationError("corpus too small to carve a validation split")
            train_corpus, val, _ = split_corpus(X, (len(X) - n_val, n_val, 0), seed=self.seed)
        self.predictor_, self.history_ = train(train_corpus, val, self._train_config())
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "predictor_"):
            raise ValidationError("estimator is not fitted; call fit first")

    def predict(self, X: Corpus | list[CorpusEntry], mode: str | None = None) -> np.ndarray:
        """Per-utterance score predictions in corpus order."""
        self._check_fitted()
        entries = X.entries if isinstance(X, Corpus) else list(X)
        mode = mode if mode is not None else self.inference_mode
        return np.array([
            predict_utterance(self.predictor_, entry, mode=mode, seed=self.inference_seed)
            for entry in entries
        ])

    def evaluate(self, X: Corpus, mode: str | None = None) -> MetricsReport:
        """Utterance- and system-level metrics on a rated corpus."""
        self._check_fitted()
        mode = mode if mode is not None else self.inference_mode
        return evaluate(self.predictor_, X, mode=mode, seed=self.inference_seed)
