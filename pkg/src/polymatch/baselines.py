"""Pairwise contrastive losses and their k-view aggregations.

Each loss has a matching ``*_grad`` returning gradients with respect to both
inputs, so the toy trainer can backpropagate without an autodiff engine.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.special import log_softmax

from .errors import ValidationError

LOSSES = ("infonce", "byol")


def _pair(X1, X2):
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    if X1.ndim != 2 or X1.shape != X2.shape:
        raise ValidationError(f"views must be n x d matrices of equal shape, got {X1.shape} and {X2.shape}")
    return X1, X2


def _check_tau(tau):
    if not tau > 0:
        raise ValidationError(f"temperature tau must be positive, got {tau}")


def infonce(X1, X2, tau: float = 0.1, symmetric: bool = False) -> float:
    """InfoNCE with view-1 anchors: ``-mean_i log softmax_j(<x1_i, x2_j> / tau)[i]``.

    With ``symmetric=True`` the loss is averaged with the view-2-anchored one.
    """
    X1, X2 = _pair(X1, X2)
    _check_tau(tau)
    logp = log_softmax(X1 @ X2.T / tau, axis=1)
    loss = -float(np.mean(np.diag(logp)))
    if symmetric:
        loss = 0.5 * (loss + infonce(X2, X1, tau))
    return loss


def infonce_grad(X1, X2, tau: float = 0.1, symmetric: bool = False):
    X1, X2 = _pair(X1, X2)
    _check_tau(tau)
    n = X1.shape[0]
    P = np.exp(log_softmax(X1 @ X2.T / tau, axis=1))
    G = (P - np.eye(n)) / (n * tau)  # d loss / d logits, times 1/tau
    g1, g2 = G @ X2, G.T @ X1
    if symmetric:
        h2, h1 = infonce_grad(X2, X1, tau)
        g1, g2 = 0.5 * (g1 + h1), 0.5 * (g2 + h2)
    return g1, g2


def byol(X1, X2) -> float:
    """``2 - (2/n) sum_i <x1_i, x2_i>``."""
    X1, X2 = _pair(X1, X2)
    return float(2.0 - 2.0 * np.einsum("id,id->", X1, X2) / X1.shape[0])


def byol_grad(X1, X2):
    X1, X2 = _pair(X1, X2)
    n = X1.shape[0]
    return -2.0 * X2 / n, -2.0 * X1 / n


def _resolve(loss: str, tau: float, symmetric: bool):
    if loss == "infonce":
        return (lambda a, b: infonce(a, b, tau, symmetric)), (lambda a, b: infonce_grad(a, b, tau, symmetric))
    if loss == "byol":
        return byol, byol_grad
    raise ValidationError(f"unknown pairwise loss {loss!r}; expected one of {LOSSES}")


def _views(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValidationError(f"expected a (k, n, d) batch, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ValidationError("pairwise aggregation needs at least two views")
    return X


def aggregate_pwe(X, loss: str = "infonce", tau: float = 0.1, symmetric: bool = False) -> float:
    """Average of the pairwise loss over all view pairs ``l < m``."""
    X = _views(X)
    f, _ = _resolve(loss, tau, symmetric)
    k = X.shape[0]
    total = sum(f(X[l], X[m]) for l, m in combinations(range(k), 2))
    return 2.0 * total / (k * (k - 1))


def aggregate_pwe_grad(X, loss: str = "infonce", tau: float = 0.1, symmetric: bool = False) -> np.ndarray:
    X = _views(X)
    _, df = _resolve(loss, tau, symmetric)
    k = X.shape[0]
    grad = np.zeros_like(X)
    for l, m in combinations(range(k), 2):
        gl, gm = df(X[l], X[m])
        grad[l] += gl
        grad[m] += gm
    return grad * (2.0 / (k * (k - 1)))


def _rest_mean(X, l, renormalize):
    k = X.shape[0]
    rest = (X.sum(axis=0) - X[l]) / (k - 1)
    if renormalize:
        rest = rest / np.linalg.norm(rest, axis=1, keepdims=True)
    return rest


def aggregate_ave(X, loss: str = "infonce", tau: float = 0.1, renormalize: bool = False, symmetric: bool = False) -> float:
    """Mean over views of the loss between a view and the average of the others.

    The average is used as is (norm at most one) unless ``renormalize``.
    """
    X = _views(X)
    f, _ = _resolve(loss, tau, symmetric)
    k = X.shape[0]
    return sum(f(X[l], _rest_mean(X, l, renormalize)) for l in range(k)) / k


def aggregate_ave_grad(X, loss: str = "infonce", tau: float = 0.1, symmetric: bool = False) -> np.ndarray:
    """Gradient of :func:`aggregate_ave` without renormalization."""
    X = _views(X)
    _, df = _resolve(loss, tau, symmetric)
    k = X.shape[0]
    grad = np.zeros_like(X)
    for l in range(k):
        gl, grest = df(X[l], _rest_mean(X, l, False))
        grad[l] += gl
        share = grest / (k - 1)
        for m in range(k):
            if m != l:
                grad[m] += share
    return grad / k


def ema_update(theta_teacher, theta_student, rho: float):
    """Teacher tracking step ``rho * teacher + (1 - rho) * student``.

    Accepts arrays or (nested) dicts/lists of arrays with matching structure.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValidationError(f"EMA rate rho must lie in [0, 1], got {rho}")
    if isinstance(theta_teacher, dict):
        return {key: ema_update(theta_teacher[key], theta_student[key], rho) for key in theta_teacher}
    if isinstance(theta_teacher, (list, tuple)):
        return type(theta_teacher)(ema_update(t, s, rho) for t, s in zip(theta_teacher, theta_student))
    return rho * np.asarray(theta_teacher, dtype=np.float64) + (1.0 - rho) * np.asarray(theta_student, dtype=np.float64)
