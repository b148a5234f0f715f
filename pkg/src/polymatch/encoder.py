"""A tiny two-layer encoder onto the unit sphere, trained with hand-written
backward rules against any of the multiview losses."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import aggregate_ave, aggregate_ave_grad, aggregate_pwe, aggregate_pwe_grad, ema_update
from .errors import NumericalError, ValidationError
from .m3g import value_and_grad
from .solver import SolverConfig

LOSS_KINDS = ("m3g", "infonce_pwe", "infonce_ave", "byol_pwe", "byol_ave")


def _forward(params, X):
    H = np.tanh(X @ params["W1"] + params["b1"])
    Z = H @ params["W2"] + params["b2"]
    norm = np.linalg.norm(Z, axis=1, keepdims=True)
    return Z / norm, (X, H, norm)


def _backward(params, cache, Y, dY):
    X, H, norm = cache
    dZ = (dY - Y * np.sum(Y * dY, axis=1, keepdims=True)) / norm
    dH = dZ @ params["W2"].T
    dA = dH * (1.0 - H * H)
    return {"W1": X.T @ dA, "b1": dA.sum(axis=0), "W2": H.T @ dZ, "b2": dZ.sum(axis=0)}


class SphericalEncoder(TransformerMixin, BaseEstimator):
    """``x -> normalize(W2 tanh(W1 x + b1) + b2)`` trained on k-view batches.

    ``fit``/``partial_fit`` take views of shape ``(k, n, n_features)`` where
    ``views[l, i]`` is view ``l`` of sample ``i``.  Each step one view (cycling
    through ``0..k-1``) is encoded by the EMA teacher and receives no
    gradient; the other ``k - 1`` views go through the student.

    Parameters
    ----------
    hidden : int
    out_dim : int
    loss : {"m3g", "infonce_pwe", "infonce_ave", "byol_pwe", "byol_ave"}
    epsilon, cost, tol, max_iter
        Matching-gap settings (``loss="m3g"``).
    tau : float
        InfoNCE temperature.
    learning_rate : float
        Plain gradient-descent step size.
    ema : float
        Teacher rate ``rho``; 0 makes the teacher a copy of the student.
    batch_size, epochs : int
        Used by ``fit``.
    random_state : int or None
    """

    def __init__(
        self,
        hidden=32,
        out_dim=8,
        loss="m3g",
        epsilon=0.2,
        cost="cv",
        tol=1e-3,
        max_iter=1000,
        tau=0.1,
        learning_rate=0.5,
        ema=0.99,
        batch_size=16,
        epochs=10,
        random_state=None,
    ):
        self.hidden = hidden
        self.out_dim = out_dim
        self.loss = loss
        self.epsilon = epsilon
        self.cost = cost
        self.tol = tol
        self.max_iter = max_iter
        self.tau = tau
        self.learning_rate = learning_rate
        self.ema = ema
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _init(self, n_features):
        if self.loss not in LOSS_KINDS:
            raise ValidationError(f"unknown loss {self.loss!r}; expected one of {LOSS_KINDS}")
        rng = check_random_state(self.random_state)
        self.params_ = {
            "W1": rng.normal(size=(n_features, self.hidden)) / np.sqrt(n_features),
            "b1": np.zeros(self.hidden),
            "W2": rng.normal(size=(self.hidden, self.out_dim)) / np.sqrt(self.hidden),
            "b2": np.zeros(self.out_dim),
        }
        self.teacher_params_ = {key: v.copy() for key, v in self.params_.items()}
        self.n_features_in_ = n_features
        self.n_steps_ = 0
        self.loss_curve_ = []
        self.solver_iterations_ = []

    def _check_views(self, views):
        views = np.asarray(views, dtype=np.float64)
        if views.ndim != 3 or views.shape[0] < 2:
            raise ValidationError(f"views must have shape (k >= 2, n, n_features), got {views.shape}")
        if not np.isfinite(views).all():
            raise ValidationError("views contain non-finite entries")
        return views

    def loss_and_grad(self, Y):
        """Loss of an embedding batch ``(k, n, d)`` and its gradient."""
        if self.loss == "m3g":
            config = SolverConfig(epsilon=self.epsilon, tolerance=self.tol, max_iterations=self.max_iter)
            result, grad = value_and_grad(Y, self.cost, config)
            self.solver_iterations_.append(result.diagnostics["iterations"])
            return result.loss, grad
        pair, agg = self.loss.split("_")
        if agg == "pwe":
            return aggregate_pwe(Y, pair, self.tau), aggregate_pwe_grad(Y, pair, self.tau)
        return aggregate_ave(Y, pair, self.tau), aggregate_ave_grad(Y, pair, self.tau)

    def partial_fit(self, views, y=None):
        """One gradient step on a single ``(k, n, n_features)`` batch."""
        views = self._check_views(views)
        if not hasattr(self, "params_"):
            self._init(views.shape[2])
        elif views.shape[2] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {views.shape[2]}")
        k = views.shape[0]
        teacher_view = self.n_steps_ % k
        Y = np.empty((k, views.shape[1], self.out_dim))
        caches = {}
        for l in range(k):
            params = self.teacher_params_ if l == teacher_view else self.params_
            Y[l], caches[l] = _forward(params, views[l])
        loss, dY = self.loss_and_grad(Y)
        if not np.isfinite(loss):
            raise NumericalError(f"training loss became {loss} at step {self.n_steps_}")
        grads = {key: np.zeros_like(v) for key, v in self.params_.items()}
        for l in range(k):
            if l == teacher_view:
                continue
            for key, g in _backward(self.params_, caches[l], Y[l], dY[l]).items():
                grads[key] += g
        for key in self.params_:
            self.params_[key] = self.params_[key] - self.learning_rate * grads[key]
        self.teacher_params_ = ema_update(self.teacher_params_, self.params_, self.ema)
        self.n_steps_ += 1
        self.loss_curve_.append(float(loss))
        return self

    def fit(self, views, y=None):
        """Run ``epochs`` passes of shuffled mini-batches over fixed views."""
        views = self._check_views(views)
        self._init(views.shape[2])
        rng = check_random_state(self.random_state)
        n = views.shape[1]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n - self.batch_size + 1, self.batch_size):
                self.partial_fit(views[:, order[start : start + self.batch_size]])
        return self

    def transform(self, X):
        """Embed samples ``(n, n_features)`` with the student onto the sphere."""
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return _forward(self.params_, X)[0]
