"""Scikit-learn style wrapper around the numpy BiLSTM + attention regressor."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .exceptions import ShapeError
from .nn import ModelConfig, ModelParams
from .training import TrainConfig, finetune, predict_raw, pretrain

SPO2_RANGE = (70.0, 100.0)


def _check_windows(X, input_dim=None):
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
    if X.ndim != 3:
        raise ShapeError(f"expected windows of shape (n, steps, channels), got {X.shape}")
    if input_dim is not None and X.shape[2] != input_dim:
        raise ShapeError(f"expected {input_dim} channels, got {X.shape[2]}")
    return X


class BiLSTMAttentionRegressor(RegressorMixin, BaseEstimator):
    """Window-level SpO2 regressor.

    Parameters
    ----------
    hidden : int
        LSTM units per direction.
    layers : int
        Number of stacked bidirectional layers.
    use_attention : bool
        Pool with self-attention; otherwise mean-pool the BiLSTM features.
    lr, batch_size, epochs : training schedule for :meth:`fit`.
    finetune_epochs, finetune_stage1_epochs : schedule for :meth:`finetune`.
    weighted_sampling : bool
        Inverse bin-frequency sampling during :meth:`fit`. Fine-tuning always
        samples this way.
    bins : int
        Number of label bins for weighted sampling.
    clamp : tuple
        Output range applied by :meth:`predict`.
    random_state : int
        Seeds initialization, shuffling and sampling.

    Attributes
    ----------
    params_ : ModelParams
    history_ : History
    """

    def __init__(self, hidden=64, layers=2, use_attention=True, lr=1e-3, batch_size=256,
                 epochs=100, finetune_epochs=150, finetune_stage1_epochs=50,
                 weighted_sampling=False, bins=10, clamp=SPO2_RANGE, random_state=0):
        self.hidden = hidden
        self.layers = layers
        self.use_attention = use_attention
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.finetune_epochs = finetune_epochs
        self.finetune_stage1_epochs = finetune_stage1_epochs
        self.weighted_sampling = weighted_sampling
        self.bins = bins
        self.clamp = clamp
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch=self.batch_size, pretrain_epochs=self.epochs,
                           finetune_epochs=self.finetune_epochs,
                           finetune_stage1_epochs=self.finetune_stage1_epochs, bins=self.bins,
                           seed=self.random_state, pretrain_weighted=self.weighted_sampling)

    def _model_config(self, X) -> ModelConfig:
        return ModelConfig(hidden=self.hidden, layers=self.layers,
                           use_attention=self.use_attention, input_dim=X.shape[2],
                           seq_len=X.shape[1], seed=self.random_state)

    def fit(self, X, y):
        X = _check_windows(X)
        y = column_or_1d(y).astype(np.float64)
        if len(y) != len(X):
            raise ShapeError(f"{len(X)} windows vs {len(y)} labels")
        self.params_, self.history_ = pretrain(X, y, self._train_config(), self._model_config(X))
        self.n_features_in_ = X.shape[2]
        return self

    def finetune(self, X, y):
        """Two-stage transfer of the fitted weights onto new data (in place)."""
        check_is_fitted(self, "params_")
        X = _check_windows(X, self.params_.config.input_dim)
        y = column_or_1d(y).astype(np.float64)
        self.params_, self.finetune_history_ = finetune(self.params_, X, y,
                                                        self._train_config())
        return self

    def predict_raw(self, X):
        """Unclamped network outputs, one per window."""
        check_is_fitted(self, "params_")
        X = _check_windows(X, self.params_.config.input_dim)
        return predict_raw(self.params_, X, self.batch_size)

    def predict(self, X):
        return np.clip(self.predict_raw(X), *self.clamp)

    @classmethod
    def from_params(cls, params: ModelParams, **kwargs) -> "BiLSTMAttentionRegressor":
        """Wrap existing parameters (e.g. a loaded checkpoint) as a fitted estimator."""
        c = params.config
        est = cls(hidden=c.hidden, layers=c.layers, use_attention=c.use_attention,
                  random_state=c.seed, **kwargs)
        est.params_ = params
        est.n_features_in_ = c.input_dim
        return est
