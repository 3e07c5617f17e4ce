"""scikit-learn style front end.

All estimators take a sensor series ``X`` of shape (T, D), one row per
timestep. The regressors predict one value per complete window, i.e. for rows
``window - 1 .. T - 1``; ``score`` aligns ``y`` accordingly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_is_fitted

from . import hypergraph as hgm
from .data import SensorSeries, Standardizer, make_windows, split_bounds
from .exceptions import InvalidArgumentError
from .model import ModelConfig, init_params, load_checkpoint, predict, save_checkpoint
from .training import TrainConfig, fit_ridge, train
from .validation import check_series, windowed_target


def _as_series(X, y, names=None):
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    return SensorSeries(names, X, "y", np.zeros(X.shape[0]) if y is None else y)


class KNNHypergraph(TransformerMixin, BaseEstimator):
    """Learn the sensor hypergraph from a (T, D) series.

    Each sensor column, standardized, is one node. ``transform`` propagates
    every timestep's sensor vector over the graph (``x_t -> N x_t``).
    """

    def __init__(self, k=4, weighted_degree=False):
        self.k = k
        self.weighted_degree = weighted_degree

    def fit(self, X, y=None):
        X = check_series(X, min_rows=2)
        Z = (X - X.mean(axis=0)) / np.maximum(X.std(axis=0), 1e-8)
        hg = hgm.build_hypergraph(Z.T, self.k)
        ops = hgm.normalized_adjacency(hg, weighted_degree=self.weighted_degree)
        self.hypergraph_ = hg
        self.incidence_ = hg.H
        self.weights_ = hg.W
        self.adjacency_ = ops.N
        self.laplacian_ = ops.L
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "adjacency_")
        X = check_series(X, n_features=self.n_features_in_)
        return X @ self.adjacency_.T


class _WindowRegressor(RegressorMixin, BaseEstimator):
    def _check_predict_input(self, X):
        check_is_fitted(self, "n_features_in_")
        return check_series(X, min_rows=self.window, n_features=self.n_features_in_)

    def score(self, X, y, sample_weight=None):
        """R^2 of the per-window predictions against ``y[window-1:]``."""
        X, y = check_series(X, y, min_rows=self.window)
        return r2_score(windowed_target(y, self.window), self.predict(X), sample_weight=sample_weight)


class STHCSSRegressor(_WindowRegressor):
    """Spatio-temporal hypergraph soft sensor.

    ``fit`` holds out the last ``val_fraction`` of the series (unless
    ``eval_set`` is given) for best-epoch selection, standardizes with
    statistics of the remaining training part, builds the sensor hypergraph
    from that part, and trains with Adam on the MSE loss.
    """

    def __init__(self, window=85, mixer_blocks=2, kernel_size=7, dilation=1, st_blocks=2,
                 channels=16, dropout=0.2, readout_hidden=64, k_neighbors=4,
                 weighted_degree=False, epochs=200, batch_size=64, lr=0.001, patience=None,
                 val_fraction=0.25, random_state=0):
        self.window = window
        self.mixer_blocks = mixer_blocks
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.st_blocks = st_blocks
        self.channels = channels
        self.dropout = dropout
        self.readout_hidden = readout_hidden
        self.k_neighbors = k_neighbors
        self.weighted_degree = weighted_degree
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.patience = patience
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _model_config(self, D):
        return ModelConfig(D=D, W=self.window, mixer_blocks=self.mixer_blocks,
                           kernel_size=self.kernel_size, dilation=self.dilation,
                           st_blocks=self.st_blocks, channels=self.channels,
                           dropout_p=self.dropout, readout_hidden=self.readout_hidden)

    def fit(self, X, y, eval_set=None):
        X, y = check_series(X, y, min_rows=self.window)
        if eval_set is None:
            if not 0 < self.val_fraction < 1:
                raise InvalidArgumentError("val_fraction must lie in (0, 1) when no eval_set is given")
            cut = X.shape[0] - int(round(self.val_fraction * X.shape[0]))
            Xv, yv = X[cut:], y[cut:]
            X, y = X[:cut], y[:cut]
        else:
            Xv, yv = check_series(*eval_set, n_features=X.shape[1])
        cfg = self._model_config(X.shape[1])
        check_series(X, min_rows=cfg.W)
        check_series(Xv, min_rows=cfg.W)

        train_s, val_s = _as_series(X, y), _as_series(Xv, yv)
        stats = Standardizer.fit(train_s)
        train_z, val_z = stats.transform(train_s), stats.transform(val_s)
        hg = hgm.build_hypergraph(train_z.values.T, self.k_neighbors)
        N = hgm.normalized_adjacency(hg, weighted_degree=self.weighted_degree).N
        params = init_params(cfg, seed=self.random_state)
        tcfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           seed=self.random_state, patience=self.patience)
        params, hist = train(cfg, params, N, make_windows(train_z, cfg.W, split="train"),
                             make_windows(val_z, cfg.W, split="val"), tcfg)
        self.model_config_ = cfg
        self.params_ = params
        self.scaler_ = stats
        self.hypergraph_ = hg
        self.adjacency_ = N
        self.history_ = hist
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        z = (X - self.scaler_.x_mean) / self.scaler_.x_std
        windows = np.lib.stride_tricks.sliding_window_view(z, self.window, axis=0)
        return self.scaler_.inverse_target(predict(windows, self.adjacency_, self.params_,
                                                   self.model_config_))

    def save(self, path):
        check_is_fitted(self, "params_")
        buffers = {"hypergraph.N": self.adjacency_, **self.scaler_.as_buffers()}
        save_checkpoint(path, self.model_config_, self.params_, buffers,
                        {"k": self.k_neighbors, "weighted_degree": int(self.weighted_degree)})

    @classmethod
    def load(cls, path) -> "STHCSSRegressor":
        cfg, params, buffers, meta = load_checkpoint(path)
        est = cls(window=cfg.W, mixer_blocks=cfg.mixer_blocks, kernel_size=cfg.kernel_size,
                  dilation=cfg.dilation, st_blocks=cfg.st_blocks, channels=cfg.channels,
                  dropout=cfg.dropout_p, readout_hidden=cfg.readout_hidden,
                  k_neighbors=int(meta.get("k", 4)),
                  weighted_degree=bool(int(meta.get("weighted_degree", 0))))
        est.model_config_ = cfg
        est.params_ = params
        est.scaler_ = Standardizer.from_buffers(buffers)
        est.adjacency_ = buffers["hypergraph.N"]
        est.n_features_in_ = cfg.D
        return est


class RidgeWindowRegressor(_WindowRegressor):
    """Ridge regression on flattened, standardized (D x window) windows."""

    def __init__(self, window=85, alpha=1.0):
        self.window = window
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_series(X, y, min_rows=self.window)
        s = _as_series(X, y)
        self.scaler_ = Standardizer.fit(s)
        ds = make_windows(self.scaler_.transform(s), self.window)
        self.model_ = fit_ridge(ds.flat(), ds.targets, self.alpha)
        self.coef_ = self.model_.coef
        self.intercept_ = self.model_.intercept
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        z = (X - self.scaler_.x_mean) / self.scaler_.x_std
        windows = np.lib.stride_tricks.sliding_window_view(z, self.window, axis=0)
        return self.scaler_.inverse_target(self.model_.predict(windows))


def chronological_split(X, y, ratios=(0.6, 0.2, 0.2)):
    """(X_train, y_train), (X_val, y_val), (X_test, y_test) as contiguous blocks."""
    X, y = check_series(X, y)
    b1, b2 = split_bounds(X.shape[0], ratios)
    return (X[:b1], y[:b1]), (X[b1:b2], y[b1:b2]), (X[b2:], y[b2:])
