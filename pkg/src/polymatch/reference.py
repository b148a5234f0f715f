"""Classical two-marginal log-domain Sinkhorn, kept separate from the
multi-marginal solver so it can serve as a cross-check."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def two_marginal_sinkhorn(M, reg: float, a=None, b=None, tol: float = 1e-13, max_iter: int = 100_000):
    """Entropic OT between histograms ``a`` and ``b`` (uniform by default).

    Returns ``(plan, value)`` where ``value`` is the dual objective
    ``<f, a> + <g, b> - reg * sum(plan)``; at convergence it equals
    ``<plan, M> + reg * <plan, log plan - 1>``.
    """
    M = np.asarray(M, dtype=np.float64)
    na, nb = M.shape
    a = np.full(na, 1.0 / na) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(nb, 1.0 / nb) if b is None else np.asarray(b, dtype=np.float64)
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(na)
    g = np.zeros(nb)
    for _ in range(max_iter):
        f = reg * (log_a - logsumexp((g[None, :] - M) / reg, axis=1))
        g = reg * (log_b - logsumexp((f[:, None] - M) / reg, axis=0))
        plan = np.exp((f[:, None] + g[None, :] - M) / reg)
        err = np.abs(plan.sum(axis=1) - a).sum()
        if err < tol:
            break
    value = f @ a + g @ b - reg * plan.sum()
    return plan, float(value)
