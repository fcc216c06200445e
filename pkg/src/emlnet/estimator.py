"""scikit-learn compatible front end."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .evaluation import decide
from .losses import OEM_MODES, LossWeights
from .model import forward
from .scenario import DomainDataset, Scenario, SplitSpec
from .trainer import MemoryConfig, ModelConfig, OptimConfig, train


class EMLNet(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Open-set classifier adapted from a labeled source to an unlabeled target.

    ``fit(X, y, X_target=...)`` trains on labeled source rows and unlabeled
    target rows. Without ``X_target``, rows of ``X`` whose label equals
    ``unlabeled`` (default -1, the scikit-learn semi-supervised convention)
    are used as the target domain.

    ``predict`` returns a source class or ``unknown_label`` for rejected
    samples. ``transform`` returns the learned features.

    Parameters
    ----------
    oem_mode : {"weighted", "uniform"}
        Weight each open-set entropy term by the closed-set probability of
        its class, or average them uniformly.
    beta1, beta2, eta, gamma : float
        Weights of the neighborhood, mixup, consistency and entropy terms.
    threshold : float
        Minimum in-lier score of the predicted class to accept it.
    """

    def __init__(
        self,
        hidden=(64, 64),
        d_feat=32,
        oem_mode="weighted",
        detach_weights=False,
        beta1=0.5,
        beta2=0.1,
        eta=0.16,
        gamma=0.1,
        alpha=2.0,
        lr_backbone=1e-3,
        lr_heads=1e-2,
        momentum=0.9,
        weight_decay=5e-4,
        schedule=(10.0, 0.75),
        epochs=50,
        batch_size=36,
        k_nn=5,
        tau=0.05,
        bank_momentum=0.0,
        threshold=0.5,
        unknown_label=-1,
        unlabeled=-1,
        random_state=0,
    ):
        self.hidden = hidden
        self.d_feat = d_feat
        self.oem_mode = oem_mode
        self.detach_weights = detach_weights
        self.beta1 = beta1
        self.beta2 = beta2
        self.eta = eta
        self.gamma = gamma
        self.alpha = alpha
        self.lr_backbone = lr_backbone
        self.lr_heads = lr_heads
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.epochs = epochs
        self.batch_size = batch_size
        self.k_nn = k_nn
        self.tau = tau
        self.bank_momentum = bank_momentum
        self.threshold = threshold
        self.unknown_label = unknown_label
        self.unlabeled = unlabeled
        self.random_state = random_state

    def _configs(self):
        if self.oem_mode not in OEM_MODES:
            raise ValueError(f"oem_mode must be one of {OEM_MODES}, got {self.oem_mode!r}")
        return (
            ModelConfig(tuple(self.hidden), self.d_feat),
            OptimConfig(self.lr_backbone, self.lr_heads, self.momentum, self.weight_decay,
                        tuple(self.schedule), self.epochs, self.batch_size),
            LossWeights(self.beta1, self.beta2, self.eta, self.gamma, self.alpha, self.detach_weights),
            MemoryConfig(self.k_nn, self.tau, self.bank_momentum),
        )

    def fit(self, X, y, X_target=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        if X_target is None:
            is_target = y == self.unlabeled
            if not is_target.any():
                raise ValueError("no target rows: pass X_target or mark rows with the unlabeled value")
            X_target, X, y = X[is_target], X[~is_target], y[~is_target]
        X_target = check_array(X_target, dtype=np.float64)
        if X_target.shape[1] != X.shape[1]:
            raise ValueError(f"X_target has {X_target.shape[1]} features, X has {X.shape[1]}")

        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two source classes")
        if self.unknown_label in self.classes_:
            raise ValueError(f"unknown_label {self.unknown_label!r} collides with a source class")
        model_cfg, optim, weights, memory = self._configs()
        K = len(self.classes_)
        scenario = Scenario(
            DomainDataset(X, y_enc, frozenset(range(K))),
            DomainDataset(X_target),
            SplitSpec(K, 0, 0),
        )
        self.params_, self.history_ = train(
            scenario, model_cfg, optim, weights, self.oem_mode, self.random_state, memory,
            threshold=self.threshold,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _forward(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.params_, X)

    def predict_proba(self, X):
        """Closed-set class probabilities, columns ordered as ``classes_``."""
        return self._forward(X).p_c.data

    def inlier_score(self, X):
        """Per-class one-vs-all in-lier probabilities."""
        return self._forward(X).p_o.data

    def predict(self, X):
        out = self._forward(X)
        idx = decide(out.p_c.data, out.p_o.data, self.threshold)
        labels = self.classes_[np.maximum(idx, 0)].astype(object if self.classes_.dtype.kind not in "iuf" else self.classes_.dtype)
        labels[idx < 0] = self.unknown_label
        return labels

    def transform(self, X):
        return self._forward(X).z.data
