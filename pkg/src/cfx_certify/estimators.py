"""scikit-learn style wrappers around the trainer and the counterfactual generator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .cfx import CfxQuery, generate_cfx, generate_robust_cfx
from .data import Dataset
from .evaluation import is_delta_robust, is_sound
from .interval import PlausibleShiftSet
from .network import FFNN, classify_batch, forward_batch
from .training import TrainConfig, retrain_incremental, train


class ReluMLPClassifier(ClassifierMixin, BaseEstimator):
    """ReLU network trained by plain SGD; ``model_`` holds the fitted network."""

    def __init__(self, hidden_size=10, learning_rate=0.1, batch_size=32, epochs=100,
                 loss="softmax-cross-entropy", random_state=0):
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.loss = loss
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(self.hidden_size, self.learning_rate, self.batch_size, self.epochs,
                           int(self.random_state), self.loss)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.model_ = train(Dataset(X, codes), self._config(), n_classes=len(self.classes_))
        self.n_features_in_ = X.shape[1]
        return self

    def partial_fit(self, X, y):
        """Continue training the fitted network on new rows."""
        check_is_fitted(self, "model_")
        X, y = check_X_y(X, y, dtype=float)
        idx = np.searchsorted(self.classes_, y)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != y):
            raise ValueError("partial_fit got labels unseen during fit")
        self.model_ = retrain_incremental(self.model_, Dataset(X, idx), self._config())
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        out = forward_batch(self.model_, X)
        return out[:, 0] if out.shape[1] == 1 else out

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return self.classes_[classify_batch(self.model_, X)]

    def predict_proba(self, X):
        out = np.atleast_2d(self.decision_function(X).T).T
        if out.shape[1] == 1:
            p1 = 1.0 / (1.0 + np.exp(-out[:, 0]))
            return np.column_stack([1.0 - p1, p1])
        z = np.exp(out - out.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)


def _network(model) -> FFNN:
    if isinstance(model, FFNN):
        return model
    if isinstance(model, ReluMLPClassifier):
        check_is_fitted(model, "model_")
        return model.model_
    raise TypeError("model must be an FFNN or a fitted ReluMLPClassifier")


class RobustCounterfactualExplainer(TransformerMixin, BaseEstimator):
    """Maps each input row to a counterfactual row; absent counterfactuals become NaN rows.

    With ``delta`` set and ``robust=True`` the counterfactuals are certified
    against every parameter shift of at most ``delta`` in the sup norm.
    ``results_`` keeps the per-row results of the last ``transform``.
    """

    def __init__(self, model=None, delta=None, robust=True, eps_step=0.2, eps_max=20.0, max_iter=None,
                 spec=None, frozen=(), method="interval"):
        self.model = model
        self.delta = delta
        self.robust = robust
        self.eps_step = eps_step
        self.eps_max = eps_max
        self.max_iter = max_iter
        self.spec = spec
        self.frozen = frozen
        self.method = method

    def fit(self, X=None, y=None):
        self.network_ = _network(self.model)
        if self.robust and self.delta is None:
            raise ValueError("robust generation needs delta")
        self.shifts_ = PlausibleShiftSet(float(self.delta)) if self.delta is not None else None
        self.n_features_in_ = self.network_.n_inputs
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        out = np.full_like(X, np.nan)
        self.results_ = []
        for i, x in enumerate(X):
            q = CfxQuery(self.network_, x, spec=self.spec, frozen=self.frozen)
            if self.robust:
                res = generate_robust_cfx(q, self.shifts_, self.max_iter, self.eps_step, self.eps_max, self.method)
            else:
                res = generate_cfx(q, 0.0)
            self.results_.append(res)
            if res.found:
                out[i] = res.x_prime
        return out

    def verify(self, X, X_prime):
        """Per row: sound at x and the counterfactual is decided as the flipped class."""
        check_is_fitted(self, "network_")
        if self.shifts_ is None:
            raise ValueError("verification needs delta")
        X = check_array(X, dtype=float)
        X_prime = check_array(X_prime, dtype=float, ensure_all_finite="allow-nan")
        flags = []
        for x, xp in zip(X, X_prime):
            if np.any(np.isnan(xp)) or not is_sound(self.network_, self.shifts_, x, self.method):
                flags.append(False)
                continue
            c = int(classify_batch(self.network_, x[None, :])[0])
            flags.append(is_delta_robust(self.network_, self.shifts_, x, c, xp, method=self.method))
        return np.array(flags, dtype=bool)
