"""Scikit-learn style estimators wrapping the deep recurrent model.

These are thin facades: hyper-parameters mirror the constructor args,
``fit`` runs the AdamW loop on (batch, length, features) sequence arrays,
and fitted state lives in trailing-underscore attributes.  They exist so
the model slots into sklearn pipelines and model-selection tooling; the
full-control API remains :mod:`lrukit.model` + :mod:`lrukit.training`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .initializers import RingConfig
from .model import ModelConfig, ModelParams, model_backward, model_forward, model_init
from .seeding import make_generator, split
from .training import (
    OptimConfig,
    TrainTask,
    sequence_mse,
    softmax_cross_entropy,
    train_loop,
)

__all__ = ["LruNetworkRegressor", "LruNetworkClassifier"]


def _check_sequences(X: np.ndarray, expected_features: int | None = None) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(
            f"expected sequences shaped (batch, length, features), got {X.shape}"
        )
    if expected_features is not None and X.shape[2] != expected_features:
        raise ValueError(
            f"X has {X.shape[2]} features per step, but the model was fitted "
            f"with {expected_features}"
        )
    return X


class _LruNetworkBase(BaseEstimator):
    """Shared plumbing for the sequence regressor/classifier."""

    def __init__(
        self,
        depth: int = 2,
        width: int = 16,
        state_dim: int = 16,
        pooling: str = "mean",
        r_min: float = 0.0,
        r_max: float = 1.0,
        dropout: float = 0.0,
        base_lr: float = 1e-3,
        total_steps: int = 300,
        weight_decay: float = 0.0,
        batch_size: int | None = None,
        random_state: int = 0,
    ):
        self.depth = depth
        self.width = width
        self.state_dim = state_dim
        self.pooling = pooling
        self.r_min = r_min
        self.r_max = r_max
        self.dropout = dropout
        self.base_lr = base_lr
        self.total_steps = total_steps
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.random_state = random_state

    def _fit_network(self, X: np.ndarray, targets: np.ndarray, out_features: int,
                     loss_fn) -> None:
        config = ModelConfig(
            depth=self.depth,
            width=self.width,
            state_dim=self.state_dim,
            in_features=X.shape[2],
            out_features=out_features,
            dropout=self.dropout,
            ring=RingConfig(r_min=self.r_min, r_max=self.r_max),
            pooling=self.pooling,
        )
        root = make_generator(self.random_state)
        init_rng, loop_seed_rng = split(root, 2)
        params = model_init(config, init_rng)
        n = X.shape[0]
        batch_size = self.batch_size
        if batch_size is not None and not 1 <= batch_size <= n:
            raise ValueError(
                f"batch_size must be in [1, {n}], got {batch_size}"
            )
        train_flag = self.dropout > 0.0

        def value_and_grad(flat, rng):
            if batch_size is not None and batch_size < n:
                idx = rng.choice(n, size=batch_size, replace=False)
            else:
                idx = slice(None)
            p = ModelParams.from_dict(flat)
            out, cache = model_forward(
                config,
                p,
                X[idx],
                train=train_flag,
                rng=rng,
                mode="parallel",
                return_cache=True,
            )
            loss, d_out = loss_fn(out, targets[idx])
            grads = model_backward(config, p, cache, d_out)
            return loss, grads

        task = TrainTask(
            name=type(self).__name__,
            params=params.to_dict(),
            value_and_grad=value_and_grad,
            config=config.to_dict(),
        )
        optim = OptimConfig(
            base_lr=self.base_lr,
            total_steps=self.total_steps,
            weight_decay=self.weight_decay,
        )
        report, state = train_loop(
            task,
            optim,
            seed=int(loop_seed_rng.integers(0, 2**31 - 1)),
            log_every=max(1, self.total_steps // 20),
        )
        self.config_ = config
        self.params_ = state.params
        self.history_ = [dict(row) for row in report.rows]
        self.diverged_ = bool(report.metrics.get("diverged", False))
        self.n_features_in_ = X.shape[2]

    def _network_outputs(self, X: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = _check_sequences(X, self.n_features_in_)
        params = ModelParams.from_dict(self.params_)
        return model_forward(self.config_, params, X, mode="parallel")


class LruNetworkRegressor(_LruNetworkBase, RegressorMixin):
    """Sequence-to-vector regressor built on the recurrent model."""

    def fit(self, X, y):
        X = _check_sequences(X)
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != X.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} sequences but y has {y.shape[0]} targets"
            )
        self._single_output_ = y.ndim == 1
        targets = y[:, None] if self._single_output_ else y
        if targets.ndim != 2:
            raise ValueError(f"y must be 1-D or 2-D, got shape {y.shape}")
        self._fit_network(X, targets, targets.shape[1], sequence_mse)
        return self

    def predict(self, X):
        out = self._network_outputs(X)
        return out[:, 0] if self._single_output_ else out


class LruNetworkClassifier(_LruNetworkBase, ClassifierMixin):
    """Sequence classifier: pooled recurrent features → softmax head."""

    def fit(self, X, y):
        X = _check_sequences(X)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"y must be 1-D with one label per sequence, got shape {y.shape}"
            )
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("classification needs at least two classes")
        self._fit_network(X, encoded, len(self.classes_), softmax_cross_entropy)
        return self

    def decision_function(self, X):
        return self._network_outputs(X)

    def predict_proba(self, X):
        logits = self._network_outputs(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X):
        logits = self._network_outputs(X)
        return self.classes_[np.argmax(logits, axis=1)]
