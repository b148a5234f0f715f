"""Desk-scale multiview representation learning on synthetic clusters.

Each sample has a class-bearing signal block and a nuisance block.  Views
share the signal (plus small noise) but draw a fresh nuisance block, so a
good multiview loss teaches the encoder to discard the nuisance.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression

from ..encoder import LOSS_KINDS, SphericalEncoder
from ..errors import ValidationError
from ..tensor import check_shape


@dataclass
class SyntheticTrainConfig:
    clusters: int = 8
    samples_per_cluster: int = 64
    test_per_cluster: int = 32
    k: int = 3
    signal_dim: int = 4
    nuisance_dim: int = 16
    separation: float = 1.5
    within_noise: float = 0.3
    view_noise: float = 0.1
    nuisance_scale: float = 1.0
    hidden: int = 32
    out_dim: int = 8
    loss: str = "m3g"
    epsilon: float = 0.2
    cost: str = "cv"
    tau: float = 0.1
    tol: float = 1e-3
    max_iters: int = 1000
    epochs: int = 200
    batch_n: int = 16
    learning_rate: float = 0.5
    ema: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValidationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        for name in ("clusters", "samples_per_cluster", "test_per_cluster", "k", "signal_dim", "hidden", "out_dim", "batch_n"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 2:
            raise ValidationError(f"k must be at least 2, got {self.k}")
        if self.batch_n > self.clusters * self.samples_per_cluster:
            raise ValidationError("batch_n exceeds the number of training samples")
        if self.learning_rate < 0 or self.epochs < 0:
            raise ValidationError("learning_rate and epochs must be non-negative")
        if not 0.0 <= self.ema <= 1.0:
            raise ValidationError(f"ema must lie in [0, 1], got {self.ema}")
        check_shape(self.batch_n, self.k)


class SyntheticClusters:
    """Generator for the cluster data and its views."""

    def __init__(self, cfg: SyntheticTrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.centers = cfg.separation * rng.standard_normal((cfg.clusters, cfg.signal_dim))

    def sample(self, per_cluster: int, rng):
        cfg = self.cfg
        labels = np.repeat(np.arange(cfg.clusters), per_cluster)
        signal = self.centers[labels] + cfg.within_noise * rng.standard_normal((labels.size, cfg.signal_dim))
        return signal, labels

    def observe(self, signal, rng):
        """One observation per row: signal plus noise, and a fresh nuisance block."""
        cfg = self.cfg
        noisy = signal + cfg.view_noise * rng.standard_normal(signal.shape)
        nuisance = cfg.nuisance_scale * rng.standard_normal((signal.shape[0], cfg.nuisance_dim))
        return np.hstack([noisy, nuisance])

    def views(self, signal, k, rng):
        return np.stack([self.observe(signal, rng) for _ in range(k)])


def probe_accuracy(train_features, train_labels, test_features, test_labels) -> float:
    """Held-out accuracy of a multinomial logistic regression on frozen features."""
    clf = LogisticRegression(max_iter=2000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(train_features, train_labels)
    return float(clf.score(test_features, test_labels))


def view_alignment(encoder: SphericalEncoder, views: np.ndarray) -> float:
    """Mean cosine similarity between embeddings of different views of a sample."""
    Y = np.stack([encoder.transform(v) for v in views])
    k = Y.shape[0]
    sims = [np.mean(np.sum(Y[l] * Y[m], axis=1)) for l in range(k) for m in range(l + 1, k)]
    return float(np.mean(sims))


def run_train(cfg: SyntheticTrainConfig) -> dict:
    """Train the toy encoder and report probe accuracy and alignment.

    Returns a dict with ``final_train_loss`` (mean over the last epoch),
    ``view_alignment``, ``probe_accuracy``, ``baseline_probe_accuracy`` (same
    encoder before training) and the loss curve summarized per epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    data = SyntheticClusters(cfg, rng)
    train_signal, train_labels = data.sample(cfg.samples_per_cluster, rng)
    test_signal, test_labels = data.sample(cfg.test_per_cluster, rng)
    train_obs = data.observe(train_signal, rng)
    test_obs = data.observe(test_signal, rng)
    test_views = data.views(test_signal, cfg.k, rng)

    encoder = SphericalEncoder(
        hidden=cfg.hidden,
        out_dim=cfg.out_dim,
        loss=cfg.loss,
        epsilon=cfg.epsilon,
        cost=cfg.cost,
        tol=cfg.tol,
        max_iter=cfg.max_iters,
        tau=cfg.tau,
        learning_rate=cfg.learning_rate,
        ema=cfg.ema,
        batch_size=cfg.batch_n,
        random_state=cfg.seed,
    )
    encoder._init(train_obs.shape[1])
    baseline = probe_accuracy(encoder.transform(train_obs), train_labels, encoder.transform(test_obs), test_labels)

    n_train = train_signal.shape[0]
    epoch_losses = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for _ in range(cfg.epochs):
            order = rng.permutation(n_train)
            views = data.views(train_signal[order], cfg.k, rng)
            start_step = encoder.n_steps_
            for start in range(0, n_train - cfg.batch_n + 1, cfg.batch_n):
                encoder.partial_fit(views[:, start : start + cfg.batch_n])
            epoch_losses.append(float(np.mean(encoder.loss_curve_[start_step:])))

    accuracy = probe_accuracy(encoder.transform(train_obs), train_labels, encoder.transform(test_obs), test_labels)
    return {
        "loss": cfg.loss,
        "final_train_loss": epoch_losses[-1] if epoch_losses else float("nan"),
        "view_alignment": view_alignment(encoder, test_views),
        "probe_accuracy": accuracy,
        "baseline_probe_accuracy": baseline,
        "epoch_losses": epoch_losses,
        "steps": encoder.n_steps_,
        "config": asdict(cfg),
    }


def run_compare(cfg: SyntheticTrainConfig, losses=("m3g", "infonce_pwe")) -> list[dict]:
    """Train one encoder per loss with identical data, seed and budget."""
    out = []
    for loss in losses:
        result = run_train(SyntheticTrainConfig(**{**asdict(cfg), "loss": loss}))
        result.pop("epoch_losses")
        result.pop("config")
        out.append(result)
    return out
