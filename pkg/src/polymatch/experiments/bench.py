"""Timing and iteration counts of cost construction plus solve over a grid."""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from ..costs import cost_tensor, normalize
from ..m3g import value_and_grad
from ..reference import two_marginal_sinkhorn
from ..solver import SolverConfig, mm_sinkhorn

BENCH_COLUMNS = ("n", "k", "epsilon", "iterations", "wall_time", "delta")
DEFAULT_NS = (8, 16, 32, 64)
DEFAULT_KS = (2, 3, 4, 5, 6)
DEFAULT_EPSILONS = (0.05, 0.2, 1.0)


@dataclass(frozen=True)
class BenchRecord:
    n: int
    k: int
    epsilon: float
    iterations: int
    wall_time: float
    delta: float


def random_sphere_batch(k: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return normalize(rng.standard_normal((k, n, d)))


class CsvSink:
    """Appends one row per record and flushes, so partial runs stay readable."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=BENCH_COLUMNS)
        self._writer.writeheader()
        self._fh.flush()

    def __call__(self, record: BenchRecord):
        self._writer.writerow(_row(record))
        self._fh.flush()

    def close(self):
        self._fh.close()


def _row(record: BenchRecord) -> dict:
    row = asdict(record)
    row["wall_time"] = f"{record.wall_time:.6f}"
    row["delta"] = repr(record.delta)
    return row


def run_bench(
    ns=DEFAULT_NS,
    ks=DEFAULT_KS,
    epsilons=DEFAULT_EPSILONS,
    d: int = 16,
    seed: int = 0,
    tol: float = 1e-3,
    max_iters: int = 1000,
    cost: str = "cv",
    max_elements: int | None = 2**24,
    sink=None,
):
    """Time cost-tensor construction plus a solve for every ``(n, k, epsilon)``.

    Every ``(n, k)`` cell reuses one random spherical batch across the
    epsilon values.  Cells with ``n**k`` above ``max_elements`` are skipped.

    Returns
    -------
    records : list of BenchRecord
    violations : list of (n, k)
        Cells where the smallest epsilon needed fewer iterations than the
        largest one.
    """
    rng = np.random.default_rng(seed)
    records, violations = [], []
    eps_sorted = sorted(epsilons)
    for n in ns:
        for k in ks:
            if max_elements is not None and n**k > max_elements:
                continue
            X = random_sphere_batch(k, n, d, rng)
            cell = {}
            for eps in eps_sorted:
                config = SolverConfig(epsilon=eps, tolerance=tol, max_iterations=max_iters)
                t0 = time.perf_counter()
                C = cost_tensor(X, cost)
                report = mm_sinkhorn(C, config)
                elapsed = time.perf_counter() - t0
                del C
                rec = BenchRecord(n, k, eps, report.iterations, elapsed, report.marginal_deviation)
                del report
                records.append(rec)
                cell[eps] = rec.iterations
                if sink is not None:
                    sink(rec)
            if len(cell) > 1 and cell[eps_sorted[0]] < cell[eps_sorted[-1]]:
                violations.append((n, k))
    return records, violations


def full_m3g_seconds(n: int, k: int, epsilon: float = 0.2, d: int = 16, seed: int = 0) -> float:
    """Wall time of one cost tensor + solve + gradient evaluation."""
    X = random_sphere_batch(k, n, d, np.random.default_rng(seed))
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        value_and_grad(X, "cv", epsilon=epsilon)
    return time.perf_counter() - t0


def crosscheck_two_marginal(n: int = 8, epsilon: float = 0.2, d: int = 16, seed: int = 0, tol: float = 1e-10) -> dict:
    """Compare the k=2 solve against the classical Sinkhorn implementation."""
    X = random_sphere_batch(2, n, d, np.random.default_rng(seed))
    C = cost_tensor(X, "cv")
    report = mm_sinkhorn(C, epsilon=epsilon, tolerance=tol, max_iterations=100_000)
    plan, value = two_marginal_sinkhorn(C, epsilon)
    return {
        "n": n,
        "epsilon": epsilon,
        "coupling_max_abs_diff": float(np.max(np.abs(report.coupling - plan))),
        "ot_value_abs_diff": abs(report.ot_value - value),
    }
