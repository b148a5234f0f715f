"""Multiway costs on k-tuples of unit vectors and the embedding-to-cost-tensor map.

Embedding batches are arrays of shape ``(k, n, d)``: k views of n points in
``d`` dimensions, every row on the unit sphere.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensor import check_shape

UNIT_NORM_TOL = 1e-6
CSD_CLAMP = 1e-12
_GENERIC_CHUNK = 1 << 15


def normalize(X, axis: int = -1) -> np.ndarray:
    """Project rows of ``X`` onto the unit sphere."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=axis, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("cannot normalize a zero vector")
    return X / norms


def check_embeddings(X, *, name: str = "embeddings") -> np.ndarray:
    """Validate a ``(k, n, d)`` batch of finite unit-norm vectors.

    Inputs are never renormalized; use :func:`normalize` explicitly.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValidationError(f"{name} must have shape (k, n, d), got {X.shape}")
    if min(X.shape) < 1:
        raise ValidationError(f"{name} has an empty dimension: {X.shape}")
    if not np.isfinite(X).all():
        raise ValidationError(f"{name} contains non-finite entries")
    _check_unit(X, name)
    return X


def _check_unit(Z: np.ndarray, name: str = "vectors") -> None:
    err = np.max(np.abs(np.linalg.norm(Z, axis=-1) - 1.0))
    if err > UNIT_NORM_TOL:
        raise ValidationError(f"{name} are not unit-norm (max deviation {err:.3g})")


def resultant_sq(Z) -> np.ndarray | float:
    """Squared norm of the mean of k unit vectors.

    ``Z`` has shape ``(k, d)`` or ``(..., k, d)``; the result drops the last
    two axes.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim < 2:
        raise ValidationError(f"expected an array of shape (..., k, d), got {Z.shape}")
    _check_unit(Z)
    return _resultant_sq(Z)


def _resultant_sq(Z: np.ndarray):
    mean = Z.mean(axis=-2)
    r2 = np.clip(np.einsum("...d,...d->...", mean, mean), 0.0, 1.0)
    return float(r2) if r2.ndim == 0 else r2


def c_cv(Z):
    """Circular variance ``1 - R^2``."""
    return 1.0 - resultant_sq(Z)


def c_csd(Z):
    """Circular standard deviation cost ``-log R^2``, with ``R^2`` clamped at 1e-12."""
    return -np.log(np.maximum(resultant_sq(Z), CSD_CLAMP))


@dataclass(frozen=True)
class MultiwayCost:
    """A permutation-aware cost on k-tuples of d-vectors.

    ``evaluate`` maps an array of shape ``(N, k, d)`` to ``(N,)``.  ``partial``
    (optional) returns the per-argument gradients with shape ``(N, k, d)``;
    without it :func:`polymatch.m3g.m3g_gradient` is unavailable for the cost.
    Only the built-in factories set ``fast``, which routes ``cv`` and ``csd``
    through the pairwise-distance evaluation.
    """

    label: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    partial: Callable[[np.ndarray], np.ndarray] | None = None
    coefficient: str = "mean"
    fast: bool = False

    def __call__(self, Z) -> float:
        Z = np.asarray(Z, dtype=np.float64)
        return float(self.evaluate(Z[None])[0])

    def scale(self, k: int) -> float:
        """Factor ``g`` with cost ``= g * (1 - R^2)`` on the sphere (``cv`` only)."""
        return _cv_scale(self.coefficient, k)


def _cv_scale(coefficient: str, k: int) -> float:
    if coefficient == "mean":
        return 1.0
    if coefficient == "printed":
        if k < 2:
            raise ValidationError("the 'printed' coefficient (2/(k-1))^2 needs k >= 2")
        return k * k * (2.0 / (k - 1)) ** 2
    raise ValidationError(f"unknown cv coefficient rule {coefficient!r}; use 'mean' or 'printed'")


def circular_variance(coefficient: str = "mean") -> MultiwayCost:
    """Circular-variance cost.

    ``coefficient="mean"`` gives ``1 - R^2 = (1/k^2) sum_{l<m} ||z_l - z_m||^2``.
    ``coefficient="printed"`` scales the pairwise sum by ``(2/(k-1))^2``
    instead, which multiplies the cost by a constant for fixed k.
    """
    _cv_scale(coefficient, 2)

    def evaluate(Z):
        return _cv_scale(coefficient, Z.shape[-2]) * (1.0 - _resultant_sq(Z))

    def partial(Z):
        k = Z.shape[-2]
        g = _cv_scale(coefficient, k)
        return np.broadcast_to(-(2.0 * g / k**2) * Z.sum(axis=-2, keepdims=True), Z.shape).copy()

    return MultiwayCost("cv", evaluate, partial, coefficient, fast=True)


def circular_std() -> MultiwayCost:
    def evaluate(Z):
        return -np.log(np.maximum(_resultant_sq(Z), CSD_CLAMP))

    def partial(Z):
        k = Z.shape[-2]
        r2 = np.atleast_1d(_resultant_sq(Z))
        w = np.where(r2 >= CSD_CLAMP, 1.0 / np.maximum(r2, CSD_CLAMP), 0.0)
        s = Z.sum(axis=-2, keepdims=True)
        return np.broadcast_to(-(2.0 / k**2) * w[..., None, None] * s, Z.shape).copy()

    return MultiwayCost("csd", evaluate, partial, fast=True)


CV = circular_variance()
CSD = circular_std()


def get_cost(cost) -> MultiwayCost:
    """Resolve ``"cv"``, ``"csd"`` or a :class:`MultiwayCost`."""
    if isinstance(cost, MultiwayCost):
        return cost
    if cost == "cv":
        return CV
    if cost == "csd":
        return CSD
    raise ValidationError(f"unknown cost {cost!r}; expected 'cv', 'csd' or a MultiwayCost")


def pairwise_sq_distances(X: np.ndarray) -> np.ndarray:
    """``D[l, m, i, j] = ||X[l, i] - X[m, j]||^2`` for unit-norm rows."""
    W = np.einsum("lid,mjd->lmij", X, X)
    return 2.0 - 2.0 * W


def pairwise_sum_tensor(X: np.ndarray) -> np.ndarray:
    """``sum_{l<m} ||x^l_{i_l} - x^m_{i_m}||^2`` over all index tuples."""
    k, n, _ = X.shape
    shape = check_shape(n, k)
    A = np.zeros(shape)
    D = pairwise_sq_distances(X)
    for l in range(k):
        for m in range(l + 1, k):
            view = [1] * k
            view[l] = view[m] = n
            A += D[l, m].reshape(view)
    return A


def resultant_tensor(X: np.ndarray) -> np.ndarray:
    """``R^2`` of every tuple ``(x^1_{i_1}, ..., x^k_{i_k})``."""
    k = X.shape[0]
    R2 = pairwise_sum_tensor(X)
    R2 *= -1.0 / k**2
    R2 += 1.0
    return np.clip(R2, 0.0, 1.0, out=R2)


def cost_tensor(X, cost="cv", *, generic: bool = False, return_info: bool = False):
    """Evaluate ``cost`` on all ``n**k`` tuples drawn one point per view.

    Parameters
    ----------
    X : array-like of shape (k, n, d)
        Unit-norm embeddings.
    cost : {"cv", "csd"} or MultiwayCost
    generic : bool
        Force per-tuple evaluation even for the built-in costs.
    return_info : bool
        Also return a dict with the evaluation path and the number of
        ``csd`` entries whose resultant was clamped.

    Returns
    -------
    C : ndarray of shape (n,) * k
    info : dict, only if ``return_info``
    """
    X = check_embeddings(X)
    cost = get_cost(cost)
    k, n, _ = X.shape
    check_shape(n, k)
    clamped = 0
    use_fast = cost.fast and not generic
    if use_fast and cost.label == "cv":
        C = pairwise_sum_tensor(X)
        C *= cost.scale(k) / k**2
        path = "fast"
    elif use_fast and cost.label == "csd":
        R2 = resultant_tensor(X)
        clamped = int(np.count_nonzero(R2 < CSD_CLAMP))
        np.maximum(R2, CSD_CLAMP, out=R2)
        C = -np.log(R2, out=R2)
        path = "fast"
    else:
        C = _generic_cost_tensor(X, cost)
        if cost.label == "csd":
            clamped = int(np.count_nonzero(C >= -math.log(CSD_CLAMP)))
        path = "generic"
    if not np.isfinite(C).all():
        raise ValidationError(f"cost {cost.label!r} produced non-finite entries")
    if return_info:
        return C, {"path": path, "clamped": clamped}
    return C


def tuple_batch(X: np.ndarray, flat: np.ndarray) -> np.ndarray:
    """Gather tuples for flat row-major indices: result has shape ``(len(flat), k, d)``."""
    k, n, _ = X.shape
    idx = np.unravel_index(flat, (n,) * k)
    return np.stack([X[l, idx[l]] for l in range(k)], axis=1)


def _generic_cost_tensor(X: np.ndarray, cost: MultiwayCost) -> np.ndarray:
    k, n, _ = X.shape
    total = n**k
    out = np.empty(total)
    for start in range(0, total, _GENERIC_CHUNK):
        flat = np.arange(start, min(start + _GENERIC_CHUNK, total))
        out[flat] = cost.evaluate(tuple_batch(X, flat))
    return out.reshape((n,) * k)
