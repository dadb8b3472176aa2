"""Scikit-learn style front-end for the semi-supervised classifier.

Follows the sklearn semi-supervised convention: pass the full training
matrix to ``fit`` with ``y == -1`` marking unlabeled rows.  Features must
already be scaled to [0, 1] (the generative likelihood assumes it).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .config import TrainConfig
from .data import Dataset
from .autodiff import Tensor
from .nets import encode

__all__ = ["ShotVAEClassifier"]


class ShotVAEClassifier(ClassifierMixin, BaseEstimator):
    """Semi-supervised VAE classifier with the smooth-ELBO / interpolation losses.

    Parameters mirror the training config; ``loss_mode`` selects between
    the full objective ("shot"), its ablations ("smooth_only", "m2") and a
    supervised baseline ("ce_only").

    Examples
    --------
    >>> clf = ShotVAEClassifier(epochs=5, hidden=32, z_dim=4)
    >>> y_train = y.copy(); y_train[unlabeled_rows] = -1
    >>> clf.fit(X, y_train).predict(X_new)        # doctest: +SKIP
    """

    def __init__(self, loss_mode: str = "shot", epochs: int = 30, lr: float = 0.1,
                 momentum: float = 0.9, beta: float = 0.01, epsilon: float = 0.001,
                 tau: float = 0.67, gamma: float = 5.0, alpha: float = 1.0,
                 z_dim: int = 8, hidden: int = 64, labeled_batch: int = 64,
                 unlabeled_batch: int = 256, random_state: int = 0):
        self.loss_mode = loss_mode
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.beta = beta
        self.epsilon = epsilon
        self.tau = tau
        self.gamma = gamma
        self.alpha = alpha
        self.z_dim = z_dim
        self.hidden = hidden
        self.labeled_batch = labeled_batch
        self.unlabeled_batch = unlabeled_batch
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            loss_mode=self.loss_mode, epochs=self.epochs, lr=self.lr,
            momentum=self.momentum, beta=self.beta, epsilon=self.epsilon,
            tau=self.tau, gamma=self.gamma, alpha=self.alpha,
            z_dim=self.z_dim, hidden=self.hidden,
            labeled_batch=self.labeled_batch, unlabeled_batch=self.unlabeled_batch,
            seed_model_init=self.random_state, seed_split=self.random_state,
            seed_batch=self.random_state, seed_sample=self.random_state,
        )

    def fit(self, X, y):
        """Fit on a matrix whose unlabeled rows carry the label -1."""
        from .train import fit_datasets  # deferred: train imports this module's siblings

        X, y = check_X_y(X, y, dtype=np.float64)
        if np.any(X < 0) or np.any(X > 1):
            raise ValueError("ShotVAEClassifier: features must lie in [0, 1]")
        y = np.asarray(y)
        labeled_mask = y != -1
        if not np.any(labeled_mask):
            raise ValueError("ShotVAEClassifier: need at least one labeled row (y != -1)")
        self.classes_ = np.unique(y[labeled_mask])
        class_index = {c: i for i, c in enumerate(self.classes_)}
        k = len(self.classes_)
        if k < 2:
            raise ValueError("ShotVAEClassifier: need at least two classes among labeled rows")

        codes = np.array([class_index[c] for c in y[labeled_mask]], dtype=np.int64)
        labeled = Dataset(X[labeled_mask], codes, k)
        unlabeled = None
        if np.any(~labeled_mask):
            unlabeled = Dataset(X[~labeled_mask], None, k,
                                _hidden_labels=None)
        config = self._config()
        params, records = fit_datasets(labeled, unlabeled, None, config)
        self.params_ = params
        self.history_ = records
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"ShotVAEClassifier: expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return encode(Tensor(X), self.params_).y_posterior.probs.data.copy()

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]
