"""Dense k-way tensors of shape ``(n,) * k`` and their reductions.

Tensors are plain C-ordered ``float64`` numpy arrays, so the flat buffer is
row-major with the first index varying slowest.  Axis arguments in the public
functions are 1-based (``1 <= axis <= k``).
"""

from __future__ import annotations

import math
from collections.abc import Iterable

import numpy as np

from .errors import ShapeCapError, ValidationError

DEFAULT_MAX_ELEMENTS = 2**28

_max_elements = DEFAULT_MAX_ELEMENTS


def get_max_elements() -> int:
    return _max_elements


def set_max_elements(cap: int) -> int:
    """Set the largest ``n**k`` a tensor may have; returns the previous cap."""
    global _max_elements
    if cap < 1:
        raise ValidationError(f"max_elements must be positive, got {cap}")
    previous, _max_elements = _max_elements, int(cap)
    return previous


def check_shape(n: int, k: int) -> tuple[int, ...]:
    """Validate ``(n, k)`` against the element cap and return the full shape."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    # compare in log space first so huge k never builds a huge int
    if k * math.log(n) > math.log(_max_elements) + 1e-9 or n**k > _max_elements:
        raise ShapeCapError(
            f"tensor with n={n}, k={k} has {n}**{k} elements, "
            f"above the cap of {_max_elements}"
        )
    return (n,) * k


def check_tensor(A, *, name: str = "tensor", allow_inf: bool = False) -> np.ndarray:
    """Return ``A`` as a contiguous float64 array with all axes of equal length.

    Parameters
    ----------
    A : array-like
        Candidate tensor.
    name : str
        Used in error messages.
    allow_inf : bool
        Accept ``-inf``/``+inf`` entries (still rejects NaN).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim == 0:
        raise ValidationError(f"{name} must have at least one axis")
    n = A.shape[0]
    if any(s != n for s in A.shape):
        raise ValidationError(f"{name} must have all axes of equal length, got shape {A.shape}")
    check_shape(n, A.ndim)
    if allow_inf:
        if np.isnan(A).any():
            raise ValidationError(f"{name} contains NaN")
    elif not np.isfinite(A).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return A


def _axis0(axis: int, k: int) -> int:
    if not 1 <= axis <= k:
        raise ValidationError(f"axis {axis} out of range for a {k}-way tensor (1-based)")
    return axis - 1


def uniform(n: int, k: int) -> np.ndarray:
    """Tensor with every entry ``1 / n**k``."""
    return np.full(check_shape(n, k), 1.0 / n**k)


def ground_truth(n: int, k: int) -> np.ndarray:
    """Materialized diagonal matching tensor: ``1/n`` on ``(i, ..., i)``, zero elsewhere."""
    J = np.zeros(check_shape(n, k))
    idx = np.arange(n)
    J[(idx,) * k] = 1.0 / n
    return J


def diagonal(A: np.ndarray) -> np.ndarray:
    """Entries ``A[i, ..., i]`` as a vector of length n."""
    n = A.shape[0]
    idx = np.arange(n)
    return A[(idx,) * A.ndim]


def marginal(P: np.ndarray, axis: int) -> np.ndarray:
    """Sum ``P`` over every axis except ``axis`` (1-based)."""
    ax = _axis0(axis, P.ndim)
    others = tuple(a for a in range(P.ndim) if a != ax)
    return np.sum(P, axis=others) if others else np.array(P, dtype=np.float64)


def tensor_sum(F: np.ndarray) -> np.ndarray:
    """Broadcast sum of the columns of ``F`` (n x k) into an ``(n,)*k`` tensor."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise ValidationError(f"potentials must be an n x k matrix, got shape {F.shape}")
    n, k = F.shape
    out = np.zeros(check_shape(n, k))
    for ax in range(k):
        out += _along(F[:, ax], ax, k)
    return out


def _along(v: np.ndarray, ax: int, k: int) -> np.ndarray:
    """View of vector ``v`` broadcastable along 0-based axis ``ax`` of a k-way tensor."""
    shape = [1] * k
    shape[ax] = v.shape[0]
    return v.reshape(shape)


def lse(A: np.ndarray, axes: Iterable[int]) -> np.ndarray | float:
    """Stabilized log-sum-exp of ``A`` over the listed 1-based ``axes``.

    ``-inf`` entries contribute zero mass; a slice that is entirely ``-inf``
    reduces to ``-inf``.  Returns a float when every axis is reduced.
    """
    A = np.asarray(A, dtype=np.float64)
    axes0 = tuple(sorted({_axis0(a, A.ndim) for a in axes}))
    if not axes0:
        raise ValidationError("lse needs at least one axis")
    if np.isnan(A).any():
        raise ValidationError("lse input contains NaN")
    m = np.max(A, axis=axes0, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(A - m), axis=axes0, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + m
    out = np.squeeze(out, axis=axes0)
    return float(out) if out.ndim == 0 else out


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius pairing ``sum(A * B)`` using numpy's pairwise summation."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch in inner product: {A.shape} vs {B.shape}")
    return float(np.sum(np.multiply(A, B).ravel()))
