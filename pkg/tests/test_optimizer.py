import io
import json

import numpy as np
import pytest

from covebo.acquisition import AcquisitionConfig
from covebo.coverage import greedy_cover
from covebo.optimizer import (
    CoverageOptimizer,
    RunAborted,
    RunConfig,
    baseline_run,
    extract_trajectory,
    mocobo_run,
    prefix_trajectory,
    read_log,
    run,
    select_training_subset,
)
from covebo.tasks import Task, make_synthetic_clustered

K, Q, N_INIT = 2, 4, 10


def small_config(steps=3, **kw):
    params = dict(
        K=K, n_init=N_INIT, evaluation_budget=N_INIT + steps * K * Q,
        acquisition=AcquisitionConfig(num_candidates=32, batch_size=Q),
        surrogate={"n_restarts": 1, "max_iter": 20},
    )
    params.update(kw)
    return RunConfig(**params)


@pytest.fixture(scope="module")
def task():
    return make_synthetic_clustered(T=4, K=2, d=3, seed=0)


@pytest.fixture(scope="module")
def result(task):
    return mocobo_run(small_config(), task)


class TableTask(Task):
    """Returns rows of a fixed table in call order."""

    def __init__(self, table, dim=2, fail_after=None):
        self.table = np.asarray(table, dtype=float)
        self.dim, self.n_objectives = dim, self.table.shape[1]
        self.calls = 0
        self.fail_after = fail_after

    def evaluate_many(self, X):
        if self.fail_after is not None and self.calls + len(X) > self.fail_after:
            raise RuntimeError("simulator crashed")
        rows = self.table[np.arange(self.calls, self.calls + len(X)) % len(self.table)]
        self.calls += len(X)
        return rows


class TestMocobo:
    def test_accounting(self, result):
        assert result.n_steps == 3
        assert result.n_evaluations == N_INIT + 3 * K * Q
        per_step = np.bincount(result.step)
        assert per_step[0] == N_INIT
        assert np.all(per_step[1:] == K * Q)
        assert set(result.region[result.step > 0]) == set(range(K))

    def test_partial_step_is_not_run(self, task):
        res = mocobo_run(small_config(evaluation_budget=N_INIT + 2 * K * Q + 3), task)
        assert res.n_steps == 2
        assert res.n_evaluations == N_INIT + 2 * K * Q

    def test_budget_below_one_step_runs_init_only(self, task):
        res = mocobo_run(small_config(evaluation_budget=N_INIT + K * Q - 1), task)
        assert res.n_steps == 0
        assert res.n_evaluations == N_INIT

    def test_trajectory_matches_prefix_greedy(self, result):
        assert np.all(np.diff(result.trajectory) >= 0)
        np.testing.assert_array_equal(result.trajectory, prefix_trajectory(result.Y, K))

    def test_final_cover(self, result):
        assert result.cover.score == result.final_score
        assert len(result.cover) == K
        assert result.final_score >= greedy_cover(result.Y, K).score - 1e-12

    def test_success_implies_improvement(self, result):
        for rec in result.tr_history:
            if any(rec["successes"]):
                assert rec["score_after"] > rec["score_before"]

    def test_seed_determinism(self, task, result):
        again = mocobo_run(small_config(), task)
        np.testing.assert_array_equal(again.X, result.X)
        np.testing.assert_array_equal(again.Y, result.Y)
        np.testing.assert_array_equal(again.trajectory, result.trajectory)
        assert again.tr_history == result.tr_history

    def test_other_seed_differs(self, task, result):
        other = mocobo_run(small_config(seed=1), task)
        assert not np.array_equal(other.X, result.X)

    def test_log_round_trip(self, result, tmp_path):
        path = tmp_path / "log.jsonl"
        result.write_log(path)
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {"step", "region", "x", "y", "best_coverage"}
        X, Y, step, region, best = read_log(path)
        np.testing.assert_array_equal(X, result.X)
        np.testing.assert_array_equal(Y, result.Y)
        np.testing.assert_array_equal(best, prefix_trajectory(Y, K))
        assert best[-1] == result.final_score

    def test_streamed_log_matches(self, task, result):
        sink = io.StringIO()
        mocobo_run(small_config(), task, log_sink=sink)
        streamed = [json.loads(line) for line in sink.getvalue().splitlines()]
        assert streamed == list(result.records())

    def test_regions_stay_in_domain(self, result):
        assert np.all((result.X >= 0) & (result.X <= 1))
        for rec in result.tr_history:
            for region in rec["regions"]:
                assert 0.5**7 <= region["length"] <= 1.6

    def test_wrong_mode(self, task):
        with pytest.raises(ValueError):
            mocobo_run(small_config(mode="random"), task)

    def test_K_larger_than_T(self, task):
        with pytest.raises(ValueError):
            mocobo_run(small_config(K=5), task)

    def test_evaluation_failure_keeps_partial_log(self):
        table = np.random.default_rng(0).random((50, 3))
        crashing = TableTask(table, fail_after=N_INIT + K * Q)
        sink = io.StringIO()
        with pytest.raises(RunAborted) as info:
            mocobo_run(small_config(), crashing, log_sink=sink)
        partial = info.value.partial
        assert partial.n_evaluations == N_INIT + K * Q
        assert len(sink.getvalue().splitlines()) == partial.n_evaluations


class TestBaselines:
    def test_random_is_deterministic_and_uniform(self, task):
        cfg = small_config(mode="random", evaluation_budget=200)
        a, b = baseline_run(cfg, task), baseline_run(cfg, task)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.trajectory, b.trajectory)
        assert a.n_evaluations == 200

    def test_all_modes_share_the_initial_design(self, task, result):
        rnd = baseline_run(small_config(mode="random"), task)
        np.testing.assert_array_equal(rnd.X[:N_INIT], result.X[:N_INIT])

    def test_per_objective(self, task):
        res = baseline_run(small_config(mode="per_objective", steps=8), task)
        T = task.n_objectives
        # each round runs T single-objective searches of Q points
        assert res.n_steps == (8 * K * Q) // (T * Q)
        assert res.n_evaluations == N_INIT + res.n_steps * T * Q
        assert res.extras["t_solution_score"] >= res.final_score
        assert res.extras["t_solution_score"] == pytest.approx(res.Y.max(axis=0).sum())

    def test_oracle_partition(self, task):
        res = baseline_run(small_config(mode="oracle_partition"), task)
        assert res.n_evaluations == N_INIT + 3 * K * Q
        inc = res.extras["incumbents"]
        for j, block in enumerate(task.partition):
            assert inc[j] == int(np.argmax(res.Y[:, list(block)].sum(1)))
        assert res.final_score >= res.extras["incumbent_score"] - 1e-12

    def test_oracle_needs_partition(self):
        table = np.random.default_rng(0).random((50, 3))
        with pytest.raises(ValueError, match="partition"):
            baseline_run(small_config(mode="oracle_partition"), TableTask(table))

    def test_oracle_partition_must_match_K(self, task):
        with pytest.raises(ValueError):
            baseline_run(small_config(mode="oracle_partition", partition=[(0, 1, 2, 3)]), task)

    def test_run_dispatch(self, task):
        assert run(small_config(mode="random"), task).config.mode == "random"


class TestTrajectory:
    def test_stride_equal_to_budget(self, result):
        counts, values = extract_trajectory(result, result.config.evaluation_budget)
        assert list(counts) == [result.config.evaluation_budget]
        assert values[-1] == result.final_score

    def test_stride_one_hand_computed(self):
        table = [[1.0, 0.0], [0.0, 3.0], [1.0, 1.0]]
        cfg = RunConfig(K=1, n_init=3, evaluation_budget=3, mode="random")
        res = baseline_run(cfg, TableTask(table))
        counts, values = extract_trajectory(res, 1)
        np.testing.assert_array_equal(counts, [1, 2, 3])
        np.testing.assert_array_equal(values, [1.0, 3.0, 3.0])

    def test_counts_past_the_log_carry_the_last_value(self, result):
        counts, values = extract_trajectory(result, 7, budget=result.n_evaluations + 20)
        assert counts[-1] == result.n_evaluations + 20
        assert values[-1] == result.final_score

    def test_concatenation_never_lowers(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A, B = rng.random((15, 4)), rng.random((10, 4))
            a = prefix_trajectory(A, 2)
            ab = prefix_trajectory(np.vstack([A, B]), 2)
            assert np.all(ab[: len(a)] == a)
            assert np.all(ab[len(a):] >= a[-1])

    def test_bad_stride(self, result):
        with pytest.raises(ValueError):
            extract_trajectory(result, 0)


def test_training_subset():
    rng = np.random.default_rng(0)
    M = rng.random((500, 3))
    latest = np.arange(480, 500)
    idx = select_training_subset(M, [3, 7], latest, 100, np.random.default_rng(1))
    assert len(idx) == 100 and len(set(idx)) == 100
    assert {3, 7} <= set(idx) and set(latest) <= set(idx)
    for t in range(3):
        assert int(np.argmax(M[:, t])) in idx
    np.testing.assert_array_equal(select_training_subset(M[:50], [0], [], 100, rng), np.arange(50))


@pytest.mark.parametrize("kwargs", [
    dict(evaluation_budget=5, n_init=10),
    dict(mode="bogus"),
    dict(K=0),
    dict(K=2, partition=[(0,), (0, 1)]),
    dict(K=2, T=3, partition=[(0,), (1,)]),
    dict(trust_region={"length_init": 5.0}),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = small_config(partition=[(0, 1), (2, 3)])
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    with pytest.raises(ValueError):
        RunConfig.from_dict({"nonsense": 1})


def test_estimator_front_end(task):
    est = CoverageOptimizer(K=2, evaluation_budget=26, n_init=10, num_candidates=16, batch_size=4,
                            max_iter=10)
    assert est.get_params()["K"] == 2
    est.optimize(task)
    assert est.cover_points_.shape == (2, 3)
    assert est.result_.n_evaluations == 26
    assert est.score_ == est.trajectory_[-1]
