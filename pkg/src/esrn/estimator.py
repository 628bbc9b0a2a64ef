"""scikit-learn style wrappers.

Feature matrices always have the four columns ``(w, d, U, Ustar)`` in that
order and the target is ``Dl``; everything must be strictly positive.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import models as _models
from .dataset import FEATURES, from_arrays
from .evolution import EsrnConfig, dimensional_exponents, run
from .network import predict_dl
from .split import ssmd_split


def check_features(X) -> np.ndarray:
    """Validate an ``(n, 4)`` matrix of positive, finite ``w, d, U, Ustar``."""
    X = check_array(X, dtype=float)
    if X.shape[1] != len(FEATURES):
        raise ValueError(f"expected {len(FEATURES)} feature columns {FEATURES}, got {X.shape[1]}")
    if np.any(X <= 0):
        raise ValueError("features must be strictly positive")
    return X


def check_training(X, y) -> tuple[np.ndarray, np.ndarray]:
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    X = check_features(X)
    if np.any(y <= 0):
        raise ValueError("target Dl must be strictly positive")
    return X, y


def feature_env(X) -> dict:
    return {name: X[:, j] for j, name in enumerate(FEATURES)}


class EsrnRegressor(RegressorMixin, BaseEstimator):
    """Evolve a symbolic network for ``Dl`` from ``(w, d, U, Ustar)``.

    ``fit`` holds out ``1 - train_fraction`` of the data with the
    max-dissimilarity split (or uses ``X_val``/``y_val`` if given) to choose
    the generation, then keeps that generation's top network.
    """

    def __init__(
        self,
        population_size: int = 100,
        generations: int = 200,
        topology=(5, 3, 1),
        metric: str = "r2",
        crossover_rate: float = 0.5,
        activation_rate: float = 0.1,
        candidate_rate: float = 0.2,
        epochs: int = 500,
        lr: float = 0.01,
        train_fraction: float = 0.7,
        snap_tol: float = 0.05,
        random_state: int = 0,
        workers: int = 1,
    ):
        self.population_size = population_size
        self.generations = generations
        self.topology = topology
        self.metric = metric
        self.crossover_rate = crossover_rate
        self.activation_rate = activation_rate
        self.candidate_rate = candidate_rate
        self.epochs = epochs
        self.lr = lr
        self.train_fraction = train_fraction
        self.snap_tol = snap_tol
        self.random_state = random_state
        self.workers = workers

    def config(self) -> EsrnConfig:
        return EsrnConfig(
            N=self.population_size, T=self.generations, topology=tuple(self.topology),
            metric=self.metric, crossover_rate=self.crossover_rate,
            activation_rate=self.activation_rate, candidate_rate=self.candidate_rate,
            seed=int(self.random_state), epochs=self.epochs, lr=self.lr, workers=self.workers,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_training(X, y)
        samples = from_arrays(*X.T, Dl=y)
        if X_val is None:
            split = ssmd_split(samples, self.train_fraction, int(self.random_state))
            train, test = split.train, split.test
        else:
            Xv, yv = check_training(X_val, y_val)
            train, test = samples, from_arrays(*Xv.T, Dl=yv)
        result = run(self.config(), train, test, snap_tol=self.snap_tol)
        self.result_ = result
        self.network_ = result.network
        self.expression_ = result.expression
        self.simplified_ = result.simplified
        self.log_ = result.log
        self.best_generation_ = result.best_generation
        self.exponents_ = result.readout
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_features(X)
        return predict_dl(self.network_, feature_env(X))

    def formula(self):
        """``(C, {variable: exponent})`` of the simplified result, or None."""
        check_is_fitted(self, "network_")
        return dimensional_exponents(self.simplified_, self.network_.output)


class FormulaRegressor(RegressorMixin, BaseEstimator):
    """A published closed-form model behind the estimator interface; ``fit``
    only validates its input since no coefficient is refit."""

    def __init__(self, model: str = "esrn_final"):
        self.model = model

    def fit(self, X, y=None):
        if self.model not in _models.CATALOG:
            raise ValueError(f"unknown model {self.model!r}")
        if y is None:
            X = check_features(X)
        else:
            X, _ = check_training(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_features(X)
        return _models.predict_arrays(self.model, *X.T)
