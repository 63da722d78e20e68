"""scikit-learn style estimators wrapping the measure network."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import UsageError
from .model import InitSpec, MeasureNet, forward_batch, init_model, share_first_layer
from .numerics import derive_seed
from .optim import TrainConfig, train
from .validation import check_sets, check_targets


class _MeasureNetBase(BaseEstimator):
    _loss = "mse"

    def __init__(self, function_class="S1", h1=None, h2=None, act1="relu", act2="relu", aug=None,
                 reg_lambda=0.0, lr=5e-4, max_iter=5000, minibatch=0, init="kaiming_uniform",
                 first_layer=None, random_state=0):
        self.function_class = function_class
        self.h1 = h1
        self.h2 = h2
        self.act1 = act1
        self.act2 = act2
        self.aug = aug
        self.reg_lambda = reg_lambda
        self.lr = lr
        self.max_iter = max_iter
        self.minibatch = minibatch
        self.init = init
        self.first_layer = first_layer
        self.random_state = random_state

    def _seed(self, label):
        rs = 0 if self.random_state is None else self.random_state
        return derive_seed(int(rs), label)

    def _build(self, d, o):
        h1 = self.h1
        if self.first_layer is not None and h1 is None:
            h1 = np.shape(self._first_layer_matrix())[0]
        net = init_model(self.function_class, d, h1, self.h2, o, self.act1, self.act2, self.aug,
                         InitSpec(self.init, self._seed("init")))
        if self.first_layer is not None:
            W1 = self._first_layer_matrix()
            source = MeasureNet(W1, np.ones((1, W1.shape[0])), np.ones((1, 1)))
            share_first_layer(net, source)
        return net

    def _first_layer_matrix(self):
        fl = self.first_layer
        return fl.W1 if isinstance(fl, MeasureNet) else np.asarray(fl, dtype=np.float64)

    def _fit(self, batch, y, o):
        cfg = TrainConfig(iterations=self.max_iter, lr=self.lr, lam=self.reg_lambda,
                          batch=len(batch), loss=self._loss, seed=self._seed("minibatch"),
                          minibatch=self.minibatch)
        self.net_ = self._build(batch.d, o)
        self.net_, self.history_ = train(self.net_, batch, y, cfg)
        self.n_features_in_ = batch.d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        out, _ = forward_batch(self.net_, check_sets(X, d=self.n_features_in_))
        return out

    def transform(self, X):
        """Second-layer features ``act2(W2 pooled)`` of each set."""
        check_is_fitted(self, "net_")
        _, cache = forward_batch(self.net_, check_sets(X, d=self.n_features_in_))
        return cache.a2


class MeasureNetRegressor(RegressorMixin, _MeasureNetBase):
    """Regression on sets of points, viewed as empirical measures.

    ``function_class`` picks S1, S2, S3 (progressively more layers frozen
    at their random initialization) or ``DeepSetsUnnormalized``.
    ``reg_lambda`` weights the class's path norm in the objective.
    ``first_layer`` (array or MeasureNet) overrides the initial W1.
    """

    def fit(self, X, y):
        batch = check_sets(X)
        y2 = check_targets(y, len(batch))
        self._ravel = np.ndim(y) == 1
        return self._fit(batch, y2, y2.shape[1])

    def predict(self, X):
        out = self.decision_function(X)
        return out[:, 0] if self._ravel else out


class MeasureNetClassifier(ClassifierMixin, _MeasureNetBase):
    """Set classifier trained with softmax cross-entropy."""

    _loss = "cross_entropy"

    def __init__(self, function_class="S1", h1=None, h2=None, act1="relu", act2="relu", aug=None,
                 reg_lambda=0.0, lr=1e-3, max_iter=5000, minibatch=0, init="kaiming_uniform",
                 first_layer=None, random_state=0):
        super().__init__(function_class, h1, h2, act1, act2, aug, reg_lambda, lr, max_iter,
                         minibatch, init, first_layer, random_state)

    def fit(self, X, y):
        batch = check_sets(X)
        y = np.asarray(y)
        if y.shape != (len(batch),):
            raise UsageError("expected one label per set")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        return self._fit(batch, encoded, len(self.classes_))

    def predict_proba(self, X):
        logits = self.decision_function(X)
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
