"""Projected gradient flow of the matching-gap loss on toy embeddings."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..costs import check_embeddings, normalize
from ..errors import NumericalError, ValidationError
from ..m3g import value_and_grad
from ..solver import SolverConfig

PRESETS = ("random_sphere", "paper_fig1")
TRAJECTORY_COLUMNS = ("step", "loss", "delta", "iters")


@dataclass
class FlowConfig:
    n: int = 4
    k: int = 3
    d: int = 2
    epsilon: float = 0.1
    cost: str = "cv"
    step_size: float = 0.05
    steps: int = 500
    seed: int = 0
    init: str = "paper_fig1"
    tol: float = 1e-9
    max_iters: int = 10_000

    def __post_init__(self):
        if min(self.n, self.k, self.d) < 1:
            raise ValidationError(f"n, k, d must be positive, got {self.n}, {self.k}, {self.d}")
        if not self.step_size >= 0:
            raise ValidationError(f"step_size must be non-negative, got {self.step_size}")
        if self.steps < 0:
            raise ValidationError(f"steps must be non-negative, got {self.steps}")
        if self.init not in PRESETS:
            raise ValidationError(f"init must be one of {PRESETS}, got {self.init!r}")
        if self.init == "paper_fig1" and (self.n, self.k, self.d) != (4, 3, 2):
            raise ValidationError("the paper_fig1 preset fixes n=4, k=3, d=2")


@dataclass
class FlowResult:
    trajectory: list[dict]
    embeddings: np.ndarray
    initial_embeddings: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def losses(self) -> np.ndarray:
        return np.array([row["loss"] for row in self.trajectory])


# Four cluster centers on the circle.  View l places point i near center
# FIG1_PERMUTATIONS[l][i]; view 1 swaps two pairs, so the initial optimal
# matching disagrees with the ground truth.
FIG1_ANGLES = (0.3, 1.9, 3.4, 4.9)
FIG1_PERMUTATIONS = ((0, 1, 2, 3), (1, 0, 3, 2), (0, 1, 2, 3))
FIG1_JITTER = 0.25
FIG1_SEED = 20240613


def paper_fig1_embeddings() -> np.ndarray:
    """Pinned ``(3, 4, 2)`` starting configuration for the toy flow."""
    rng = np.random.default_rng(FIG1_SEED)
    angles = np.asarray(FIG1_ANGLES)
    X = np.empty((3, 4, 2))
    for l, perm in enumerate(FIG1_PERMUTATIONS):
        theta = angles[list(perm)] + FIG1_JITTER * rng.standard_normal(4)
        X[l] = np.column_stack([np.cos(theta), np.sin(theta)])
    return X


def initial_embeddings(cfg: FlowConfig) -> np.ndarray:
    if cfg.init == "paper_fig1":
        return paper_fig1_embeddings()
    rng = np.random.default_rng(cfg.seed)
    return normalize(rng.standard_normal((cfg.k, cfg.n, cfg.d)))


def tangent(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Project each row of ``G`` onto the tangent space of the sphere at ``X``."""
    return G - np.sum(G * X, axis=-1, keepdims=True) * X


def run_flow(cfg: FlowConfig, X0: np.ndarray | None = None) -> FlowResult:
    """Iterate ``x <- normalize(x - step_size * grad)`` and log every state.

    The trajectory has ``steps + 1`` rows; row ``t`` describes the state
    after ``t`` updates.  A non-finite loss raises :class:`NumericalError`
    whose ``state`` attribute holds the last finite embeddings.
    """
    X = initial_embeddings(cfg) if X0 is None else check_embeddings(X0)
    start = X.copy()
    solver = SolverConfig(epsilon=cfg.epsilon, tolerance=cfg.tol, max_iterations=cfg.max_iters)
    rows = []
    for step in range(cfg.steps + 1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result, grad = value_and_grad(X, cfg.cost, solver)
        if not (math.isfinite(result.loss) and np.isfinite(grad).all()):
            err = NumericalError(f"flow diverged at step {step}: loss={result.loss}")
            err.state = X
            raise err
        rows.append(
            {
                "step": step,
                "loss": result.loss,
                "delta": result.diagnostics["delta"],
                "iters": result.diagnostics["iterations"],
            }
        )
        if step < cfg.steps and cfg.step_size > 0:
            X = normalize(X - cfg.step_size * grad)
    return FlowResult(rows, X, start, asdict(cfg))
