"""Multi-marginal matching gap loss and its gradient.

The loss compares the entropic objective of the ground-truth matching (each
point's k views matched together, weight ``1/n`` on the diagonal) with the
optimal entropic multi-marginal coupling of the same cost tensor.  Its
gradient is a forward-pass byproduct: the cost-tensor vector-Jacobian product
applied to ``J - P``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .costs import CSD_CLAMP, MultiwayCost, check_embeddings, cost_tensor, get_cost, resultant_tensor, tuple_batch
from .errors import ValidationError
from .solver import SolveReport, SolverConfig, mm_sinkhorn
from .tensor import _axis0, check_tensor, diagonal, marginal

_GRAD_CHUNK = 1 << 15


@dataclass(frozen=True)
class M3GResult:
    """Loss value together with the solve that produced it.

    ``loss`` is the gap ``ground_truth_cost - primal_value`` where
    ``primal_value`` is the entropic objective of the solver's coupling
    rescaled to unit mass.
    """

    loss: float
    ground_truth_cost: float
    ot_value: float
    primal_value: float
    coupling: np.ndarray = field(repr=False)
    cost: np.ndarray = field(repr=False)
    solver_report: SolveReport = field(repr=False)
    diagnostics: dict = field(default_factory=dict)


def ground_truth_cost(C: np.ndarray, epsilon: float) -> float:
    """Entropic objective of the diagonal matching: ``mean(diag C) - eps (log n + 1)``."""
    n = C.shape[0]
    return float(np.mean(diagonal(C)) - epsilon * (math.log(n) + 1.0))


def _config(config, overrides) -> SolverConfig:
    if config is None:
        return SolverConfig(**overrides)
    if overrides:
        return SolverConfig(**{**config.__dict__, **overrides})
    return config


def m3g_from_cost(C, config: SolverConfig | None = None, **overrides) -> M3GResult:
    """Matching gap of a precomputed cost tensor."""
    config = _config(config, overrides)
    C = check_tensor(C, name="cost")
    report = mm_sinkhorn(C, config)
    gt = ground_truth_cost(C, config.epsilon)
    diagnostics = {
        "delta": report.marginal_deviation,
        "iterations": report.iterations,
        "converged": report.converged,
        "mass": report.mass,
    }
    return M3GResult(
        loss=gt - report.primal_value,
        ground_truth_cost=gt,
        ot_value=report.ot_value,
        primal_value=report.primal_value,
        coupling=report.coupling,
        cost=C,
        solver_report=report,
        diagnostics=diagnostics,
    )


def m3g(X, cost="cv", config: SolverConfig | None = None, **overrides) -> M3GResult:
    """Multi-marginal matching gap of a ``(k, n, d)`` embedding batch.

    Parameters
    ----------
    X : array-like of shape (k, n, d)
        Unit-norm embeddings, ``X[l, i]`` is view ``l`` of point ``i``.
    cost : {"cv", "csd"} or MultiwayCost
    config : SolverConfig, optional
        Keyword ``overrides`` (``epsilon``, ``tolerance``, ...) replace fields.

    Returns
    -------
    M3GResult
        A non-converged solve still returns a loss, with
        ``diagnostics["converged"]`` set to False.
    """
    X = check_embeddings(X)
    C, info = cost_tensor(X, cost, return_info=True)
    result = m3g_from_cost(C, config, **overrides)
    result.diagnostics.update(cost_path=info["path"], clamped=info["clamped"])
    return result


def pairwise_marginal(T: np.ndarray, axis_a: int, axis_b: int) -> np.ndarray:
    """Sum ``T`` over all axes but ``axis_a`` and ``axis_b`` (1-based).

    ``out[i, j]`` collects the entries whose index on ``axis_a`` is ``i`` and
    on ``axis_b`` is ``j``.
    """
    T = np.asarray(T, dtype=np.float64)
    a, b = _axis0(axis_a, T.ndim), _axis0(axis_b, T.ndim)
    if a == b:
        raise ValidationError("pairwise_marginal needs two distinct axes")
    others = tuple(x for x in range(T.ndim) if x not in (a, b))
    M = np.sum(T, axis=others) if others else T
    return M if a < b else M.T


def _resultant_weighted(X: np.ndarray, W: np.ndarray, factor: float) -> np.ndarray:
    """Contract ``W`` against ``d c / d x`` for costs whose tuple gradient is
    ``factor * w(tuple) * sum_m x^m_{i_m}`` with ``w`` already folded into W."""
    k, n, d = X.shape
    grad = np.empty_like(X)
    for l in range(k):
        g = marginal(W, l + 1)[:, None] * X[l]
        for m in range(k):
            if m != l:
                g += pairwise_marginal(W, l + 1, m + 1) @ X[m]
        grad[l] = factor * g
    return grad


def _generic_gradient(X: np.ndarray, W: np.ndarray, cost: MultiwayCost) -> np.ndarray:
    k, n, _ = X.shape
    grad = np.zeros_like(X)
    flatW = W.ravel()
    total = flatW.size
    for start in range(0, total, _GRAD_CHUNK):
        flat = np.arange(start, min(start + _GRAD_CHUNK, total))
        G = cost.partial(tuple_batch(X, flat)) * flatW[flat, None, None]
        idx = np.unravel_index(flat, (n,) * k)
        for l in range(k):
            np.add.at(grad[l], idx[l], G[:, l])
    return grad


def cost_vjp(X, T, cost="cv", *, generic: bool = False) -> np.ndarray:
    """Apply the transpose Jacobian of the cost-tensor map at ``X`` to ``T``."""
    X = check_embeddings(X)
    cost = get_cost(cost)
    k = X.shape[0]
    T = np.asarray(T, dtype=np.float64)
    if cost.fast and not generic and cost.label == "cv":
        return _resultant_weighted(X, T, -2.0 * cost.scale(k) / k**2)
    if cost.fast and not generic and cost.label == "csd":
        R2 = resultant_tensor(X)
        keep = R2 >= CSD_CLAMP
        W = np.divide(T, R2, out=np.zeros_like(T), where=keep)
        return _resultant_weighted(X, W, -2.0 / k**2)
    if cost.partial is None:
        raise ValidationError(f"cost {cost.label!r} has no partial-derivative evaluator")
    return _generic_gradient(X, T, cost)


def value_and_grad(X, cost="cv", config: SolverConfig | None = None, **overrides):
    """Return ``(M3GResult, gradient)`` from a single solve.

    The gradient has the shape of ``X``.  When the solve did not converge it
    is only approximate; ``diagnostics["gradient_approximate"]`` records it and
    a ``ConvergenceWarning`` is emitted.
    """
    X = check_embeddings(X)
    cost = get_cost(cost)
    result = m3g(X, cost, config, **overrides)
    report = result.solver_report
    T = -report.normalized_coupling
    n, k = X.shape[1], X.shape[0]
    idx = np.arange(n)
    T[(idx,) * k] += 1.0 / n
    grad = cost_vjp(X, T, cost)
    approximate = not report.converged
    result.diagnostics["gradient_approximate"] = approximate
    if approximate:
        warnings.warn(
            f"solver stopped at delta={report.marginal_deviation:.3g} after "
            f"{report.iterations} iterations; gradient is approximate",
            ConvergenceWarning,
            stacklevel=2,
        )
    return result, grad


def m3g_gradient(X, cost="cv", config: SolverConfig | None = None, **overrides) -> np.ndarray:
    """Gradient of :func:`m3g` with respect to the embeddings, shape ``(k, n, d)``."""
    return value_and_grad(X, cost, config, **overrides)[1]


def m3g_k2(X1, X2, epsilon: float = 0.2, cost="cv", config: SolverConfig | None = None, **overrides) -> float:
    """Two-view matching gap computed from the ``n x n`` cost matrix.

    The ground-truth term is the mean cost of the paired rows; the optimal
    term comes from the same Sinkhorn solver on the cross-view cost matrix.
    """
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    if X1.shape != X2.shape or X1.ndim != 2:
        raise ValidationError(f"views must be two n x d matrices of equal shape, got {X1.shape} and {X2.shape}")
    X = check_embeddings(np.stack([X1, X2]))
    cost = get_cost(cost)
    if cost.fast and cost.label == "cv":
        sq = 2.0 - 2.0 * (X1 @ X2.T)
        C = (cost.scale(2) / 4.0) * sq
    else:
        C = cost_tensor(X, cost)
    config = _config(config, {"epsilon": epsilon, **overrides})
    return m3g_from_cost(C, config).loss
