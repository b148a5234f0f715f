"""Entropic multi-marginal optimal transport with uniform marginals.

The solver works on the dual potentials ``F`` (an ``n x k`` matrix) and only
materializes the coupling ``exp((sum F - C) / eps)`` to test convergence and
to report results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .tensor import _along, check_tensor, inner, lse, marginal, tensor_sum


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`mm_sinkhorn`.

    ``tolerance`` bounds the summed L1 deviation of the k marginals from
    uniform; ``check_every`` is the number of full sweeps between checks.
    """

    epsilon: float = 0.2
    tolerance: float = 1e-3
    max_iterations: int = 1000
    check_every: int = 1

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not self.tolerance > 0:
            raise ValidationError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if int(self.check_every) != self.check_every or self.check_every < 1:
            raise ValidationError(f"check_every must be a positive integer, got {self.check_every}")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one multi-marginal Sinkhorn solve.

    Attributes
    ----------
    potentials : ndarray of shape (n, k)
        Dual potentials, one column per marginal.
    coupling : ndarray of shape (n,) * k
        ``exp((sum F - C) / eps)`` at the returned potentials.
    ot_value : float
        ``mean-column-sum(F) - eps * mass(coupling)``, the regularized cost
        estimate the algorithm outputs.
    iterations : int
        Number of full sweeps over the k potentials.
    marginal_deviation : float
        Summed L1 distance of the coupling's marginals from uniform.
    converged : bool
        Whether ``marginal_deviation < tolerance``.
    primal_value : float
        Entropic objective of the coupling rescaled to unit mass.
    mass : float
        Total mass of the unrescaled coupling.
    """

    potentials: np.ndarray
    coupling: np.ndarray
    ot_value: float
    iterations: int
    marginal_deviation: float
    converged: bool
    primal_value: float
    mass: float
    epsilon: float
    tolerance: float
    log_coupling: np.ndarray = field(repr=False, default=None)

    @property
    def normalized_coupling(self) -> np.ndarray:
        return self.coupling / self.mass


def marginal_deviation(P: np.ndarray) -> float:
    """Sum over axes of ``|| marginal(P, axis) - 1/n ||_1``."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    return float(sum(np.sum(np.abs(marginal(P, ax) - 1.0 / n)) for ax in range(1, P.ndim + 1)))


def primal_from_dual(F: np.ndarray, C: np.ndarray, epsilon: float) -> np.ndarray:
    """Coupling ``exp((sum F - C) / epsilon)`` evaluated in log space."""
    C = check_tensor(C, name="cost")
    F = _check_potentials(F, C)
    return np.exp((tensor_sum(F) - C) / epsilon)


def dual_objective(F: np.ndarray, C: np.ndarray, epsilon: float) -> float:
    """Dual value ``sum(F) / n - epsilon * sum(exp((sum F - C) / epsilon))``."""
    C = check_tensor(C, name="cost")
    F = _check_potentials(F, C)
    n, k = F.shape
    log_mass = lse((tensor_sum(F) - C) / epsilon, range(1, k + 1))
    return float(np.sum(F) / n - epsilon * math.exp(log_mass))


def entropic_objective(P: np.ndarray, C: np.ndarray, epsilon: float) -> float:
    """``<P, C> + epsilon * <P, log P - 1>`` with ``0 log 0 = 0``."""
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0):
        raise ValidationError("coupling has negative entries")
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(P > 0, P * (np.log(P) - 1.0), 0.0)
    return inner(P, C) + epsilon * float(np.sum(ent.ravel()))


def _entropic_objective_log(logP: np.ndarray, C: np.ndarray, epsilon: float) -> float:
    # same objective from log-entries; underflowed entries contribute exactly 0
    P = np.exp(logP)
    return inner(P, C + epsilon * (logP - 1.0))


def _check_potentials(F, C) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (C.shape[0], C.ndim):
        raise ValidationError(f"potentials shape {F.shape} does not match cost with n={C.shape[0]}, k={C.ndim}")
    if not np.isfinite(F).all():
        raise ValidationError("potentials contain non-finite entries")
    return F


def _fill_log_coupling(S: np.ndarray, F: np.ndarray, C_eps: np.ndarray, epsilon: float) -> None:
    k = F.shape[1]
    np.negative(C_eps, out=S)
    for ax in range(k):
        S += _along(F[:, ax] / epsilon, ax, k)


def mm_sinkhorn(C, config: SolverConfig | None = None, **overrides) -> SolveReport:
    """Solve entropic multi-marginal OT with uniform marginals.

    Block-coordinate ascent on the dual: each sweep updates the potential of
    every marginal in order ``1..k`` so that marginal becomes exactly uniform.
    Convergence is tested after every ``check_every`` sweeps.

    Parameters
    ----------
    C : array-like of shape (n,) * k
        Finite cost tensor.
    config : SolverConfig, optional
        Solver settings; keyword ``overrides`` replace individual fields.

    Returns
    -------
    SolveReport
        If the iteration budget runs out, the iterate with the smallest
        marginal deviation is returned with ``converged=False``.
    """
    if config is None:
        config = SolverConfig(**overrides)
    elif overrides:
        config = SolverConfig(**{**config.__dict__, **overrides})
    C = check_tensor(C, name="cost")
    eps = float(config.epsilon)
    n, k = C.shape[0], C.ndim
    log_n = math.log(n)
    F = np.zeros((n, k))
    C_eps = C / eps
    S = -C_eps  # log coupling, kept in sync with F
    buf = np.empty_like(S)
    all_axes = tuple(range(k))

    best_F, best_delta = F.copy(), math.inf
    converged = False
    it = 0
    delta = math.inf
    for it in range(1, config.max_iterations + 1):
        for ax in range(k):
            others = all_axes[:ax] + all_axes[ax + 1 :]
            if others:
                m = np.max(S, axis=others, keepdims=True)
                np.subtract(S, m, out=buf)
                np.exp(buf, out=buf)
                log_marg = np.log(np.sum(buf, axis=others)) + m.reshape(n)
            else:
                log_marg = S.copy()
            step = -eps * (log_marg + log_n)
            F[:, ax] += step
            S += _along(step / eps, ax, k)
        if it % config.check_every and it != config.max_iterations:
            continue
        # rebuild from F so rounding in the incremental updates never accumulates
        _fill_log_coupling(S, F, C_eps, eps)
        np.exp(S, out=buf)
        delta = marginal_deviation(buf)
        if delta < best_delta:
            best_delta, best_F = delta, F.copy()
        if delta < config.tolerance:
            converged = True
            break

    if not converged and not np.array_equal(best_F, F):
        F = best_F
        _fill_log_coupling(S, F, C_eps, eps)
        np.exp(S, out=buf)
        delta = best_delta
    P = buf
    mass = float(np.sum(P.ravel()))
    ot_value = float(np.sum(F) / n - eps * mass)
    log_P_hat = S - math.log(mass)
    primal = _entropic_objective_log(log_P_hat, C, eps)
    return SolveReport(
        potentials=F,
        coupling=P,
        ot_value=ot_value,
        iterations=it,
        marginal_deviation=float(delta),
        converged=converged,
        primal_value=primal,
        mass=mass,
        epsilon=eps,
        tolerance=float(config.tolerance),
        log_coupling=S,
    )
