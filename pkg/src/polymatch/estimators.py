"""scikit-learn style front ends for the solver and the loss."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .costs import check_embeddings, cost_tensor
from .m3g import M3GResult, m3g, value_and_grad
from .solver import SolverConfig, mm_sinkhorn
from .tensor import check_tensor


class MultiMarginalSinkhorn(BaseEstimator):
    """Entropic multi-marginal OT solver with uniform marginals.

    Parameters
    ----------
    epsilon : float, default=0.2
        Entropic regularization, an absolute scale on the cost.
    tol : float, default=1e-3
        Stop once the summed L1 marginal deviation falls below ``tol``.
    max_iter : int, default=1000
        Maximum number of full sweeps.
    check_every : int, default=1
        Sweeps between convergence checks.

    Attributes
    ----------
    potentials_ : ndarray of shape (n, k)
    coupling_ : ndarray of shape (n,) * k
    ot_value_ : float
    n_iter_ : int
    marginal_deviation_ : float
    converged_ : bool
    report_ : SolveReport
    """

    def __init__(self, epsilon=0.2, tol=1e-3, max_iter=1000, check_every=1):
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.check_every = check_every

    def _config(self):
        return SolverConfig(self.epsilon, self.tol, self.max_iter, self.check_every)

    def fit(self, C, y=None):
        C = check_tensor(C, name="cost")
        report = mm_sinkhorn(C, self._config())
        self.report_ = report
        self.potentials_ = report.potentials
        self.coupling_ = report.coupling
        self.ot_value_ = report.ot_value
        self.n_iter_ = report.iterations
        self.marginal_deviation_ = report.marginal_deviation
        self.converged_ = report.converged
        return self

    def fit_embeddings(self, X, cost="cv"):
        """Build the cost tensor of a ``(k, n, d)`` batch and fit on it."""
        return self.fit(cost_tensor(check_embeddings(X), cost))

    def score(self, C=None, y=None):
        """Negated regularized OT value of the fitted problem (higher is cheaper)."""
        check_is_fitted(self, "report_")
        if C is not None:
            return -mm_sinkhorn(C, self._config()).ot_value
        return -self.ot_value_


class M3GLoss(BaseEstimator):
    """Matching-gap loss with fixed hyperparameters, callable on batches."""

    def __init__(self, epsilon=0.2, cost="cv", tol=1e-3, max_iter=1000):
        self.epsilon = epsilon
        self.cost = cost
        self.tol = tol
        self.max_iter = max_iter

    def _config(self):
        return SolverConfig(epsilon=self.epsilon, tolerance=self.tol, max_iterations=self.max_iter)

    def evaluate(self, X) -> M3GResult:
        return m3g(X, self.cost, self._config())

    def __call__(self, X) -> float:
        return self.evaluate(X).loss

    def gradient(self, X):
        return value_and_grad(X, self.cost, self._config())[1]

    def value_and_grad(self, X):
        result, grad = value_and_grad(X, self.cost, self._config())
        return result.loss, grad
