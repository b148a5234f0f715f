import numpy as np
import pytest

from polymatch.errors import ValidationError
from polymatch.experiments.bench import BENCH_COLUMNS, CsvSink, crosscheck_two_marginal, run_bench
from polymatch.experiments.flow import FlowConfig, paper_fig1_embeddings, run_flow, tangent
from polymatch.experiments.train import SyntheticTrainConfig, run_compare, run_train
from polymatch.m3g import value_and_grad
from polymatch.solver import SolverConfig


def test_fig1_preset_shape_and_norms():
    X = paper_fig1_embeddings()
    assert X.shape == (3, 4, 2)
    np.testing.assert_allclose(np.linalg.norm(X, axis=-1), 1.0, atol=1e-15)
    np.testing.assert_array_equal(X, paper_fig1_embeddings())


def test_fig1_preset_requires_matching_shape():
    with pytest.raises(ValidationError):
        FlowConfig(n=5)


def test_zero_step_size_keeps_loss_constant():
    result = run_flow(FlowConfig(step_size=0.0, steps=3))
    assert len(result.trajectory) == 4
    assert np.ptp(result.losses) == 0.0
    np.testing.assert_array_equal(result.embeddings, result.initial_embeddings)


def test_identical_points_are_stationary():
    v = np.array([0.6, -0.8])
    X0 = np.broadcast_to(v, (3, 4, 2)).copy()
    result = run_flow(FlowConfig(init="random_sphere", steps=5), X0=X0)
    np.testing.assert_allclose(result.embeddings, X0, atol=1e-10)


def test_short_flow_decreases_loss():
    result = run_flow(FlowConfig(steps=40))
    assert result.losses[-1] < result.losses[0]
    assert [row["step"] for row in result.trajectory] == list(range(41))


def test_flow_gradient_matches_tangent_projection():
    X = paper_fig1_embeddings()
    _, grad = value_and_grad(X, "cv", SolverConfig(epsilon=0.1, tolerance=1e-9, max_iterations=10_000))
    T = tangent(X, grad)
    np.testing.assert_allclose(np.sum(T * X, axis=-1), 0.0, atol=1e-14)


SMALL = dict(clusters=3, samples_per_cluster=8, test_per_cluster=4, nuisance_dim=4, hidden=8, out_dim=4, epochs=2, batch_n=8)


def test_small_train_run_is_deterministic():
    cfg = SyntheticTrainConfig(**SMALL)
    a, b = run_train(cfg), run_train(cfg)
    assert a["steps"] == 2 * 3
    assert a["probe_accuracy"] == b["probe_accuracy"]
    assert a["epoch_losses"] == b["epoch_losses"]


def test_zero_learning_rate_matches_baseline():
    result = run_train(SyntheticTrainConfig(**{**SMALL, "learning_rate": 0.0}))
    assert result["probe_accuracy"] == result["baseline_probe_accuracy"]


def test_compare_shares_budget():
    rows = run_compare(SyntheticTrainConfig(**{**SMALL, "epochs": 1}), ["m3g", "byol_ave"])
    assert [r["loss"] for r in rows] == ["m3g", "byol_ave"]
    assert rows[0]["steps"] == rows[1]["steps"]
    assert rows[0]["baseline_probe_accuracy"] == rows[1]["baseline_probe_accuracy"]


def test_train_config_validation():
    with pytest.raises(ValidationError):
        SyntheticTrainConfig(k=1)
    with pytest.raises(ValidationError):
        SyntheticTrainConfig(loss="other")


def test_small_bench(tmp_path):
    sink = CsvSink(tmp_path / "b.csv")
    records, violations = run_bench(ns=(4, 6), ks=(2, 3), epsilons=(0.05, 1.0), sink=sink)
    sink.close()
    assert len(records) == 8 and violations == []
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == ",".join(BENCH_COLUMNS) and len(lines) == 9


def test_bench_skips_large_cells():
    records, _ = run_bench(ns=(4,), ks=(2, 3), epsilons=(0.2,), max_elements=20)
    assert [(r.n, r.k) for r in records] == [(4, 2)]


def test_crosscheck():
    check = crosscheck_two_marginal()
    assert check["coupling_max_abs_diff"] <= 1e-6
