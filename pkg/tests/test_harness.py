import json

import numpy as np
import pytest

from covebo import cli
from covebo.acquisition import AcquisitionConfig
from covebo.coverage import ObjectiveMatrix
from covebo.harness import (
    CEILING_MODE,
    ExperimentSpec,
    compare_modes,
    load_summary,
    read_trajectory_csv,
    run_experiment,
)
from covebo.optimizer import RunConfig

TASK = {"T": 4, "K": 2, "d": 3, "seed": 0}


def config(mode="mocobo", budget=42, **kw):
    params = dict(task="clustered", task_params=TASK, K=2, n_init=10, evaluation_budget=budget,
                  acquisition=AcquisitionConfig(num_candidates=32, batch_size=4),
                  surrogate={"n_restarts": 1, "max_iter": 15}, mode=mode)
    params.update(kw)
    return RunConfig(**params)


def test_single_replication_has_zero_stderr(tmp_path):
    summary = run_experiment(ExperimentSpec(config(), replications=1, out_dir=tmp_path / "a", stride=8))
    rows = read_trajectory_csv(tmp_path / "a" / "trajectory.csv")
    assert all(se == 0.0 for *_, se in rows)
    assert [r[0] for r in rows] == [8, 16, 24, 32, 40, 42]
    assert summary.final_stderr == 0.0


def test_files_round_trip_and_are_deterministic(tmp_path):
    spec = ExperimentSpec(config(), replications=3, base_seed=5, out_dir=tmp_path / "exp", stride=5)
    summary = run_experiment(spec)
    again = run_experiment(spec)
    assert again.out_dir != summary.out_dir  # fresh suffixed directory
    first = (tmp_path / "exp" / "trajectory.csv").read_bytes()
    assert first.splitlines()[0] == b"evaluations,mode,mean,stderr"
    assert first == (tmp_path / "exp_1" / "trajectory.csv").read_bytes()

    loaded = load_summary(summary.out_dir)
    np.testing.assert_array_equal(loaded.mean, summary.mean)
    np.testing.assert_array_equal(loaded.stderr, summary.stderr)
    assert loaded.final_scores == summary.final_scores

    runs = sorted(p.name for p in (tmp_path / "exp").iterdir() if p.is_dir())
    assert runs == ["run_000", "run_001", "run_002"]
    run_summary = json.loads((tmp_path / "exp" / "run_001" / "summary.json").read_text())
    assert run_summary["seed"] == 6
    assert len((tmp_path / "exp" / "run_001" / "log.jsonl").read_text().splitlines()) == 42


def test_stderr_is_sample_std_over_sqrt_R():
    summary, results = run_experiment(ExperimentSpec(config(), replications=4, stride=42),
                                      return_results=True)
    finals = np.array([r.final_score for r in results])
    assert summary.final_stderr == pytest.approx(finals.std(ddof=1) / 2)
    assert summary.stderr[-1] == pytest.approx(finals.std(ddof=1) / 2)


def test_random_mean_trajectory_is_monotone():
    summary = run_experiment(ExperimentSpec(config("random", budget=400), replications=10, stride=20))
    assert np.all(np.diff(summary.mean) >= 0)


def test_failed_replications_are_recorded(tmp_path):
    # seed-dependent failure: an unknown task param breaks every run
    bad = config(task_params={**TASK, "bogus": 1})
    with pytest.raises(RuntimeError, match="replications failed"):
        run_experiment(ExperimentSpec(bad, replications=2, out_dir=tmp_path / "bad"))


def test_compare_modes():
    specs = [ExperimentSpec(config(m, budget=90), replications=2, stride=20)
             for m in ("mocobo", "random", "per_objective")]
    table = compare_modes(specs)
    modes = [row[1] for row in table.rows]
    for mode in ("mocobo", "random", "per_objective", CEILING_MODE):
        assert modes.count(mode) == len(table.evaluations)
    ceiling, _ = table.series(CEILING_MODE)
    assert np.all(ceiling == ceiling[0])
    finals = table.final()
    for mode in ("mocobo", "random", "per_objective"):
        mean, se = finals[mode]
        assert mean <= finals[CEILING_MODE][0] + 3 * max(se, finals[CEILING_MODE][1]) + 1e-12


def test_compare_modes_rejects_mismatch():
    a = run_experiment(ExperimentSpec(config("random", budget=50), replications=1, stride=10))
    b = run_experiment(ExperimentSpec(config("random", budget=60), replications=1, stride=10))
    with pytest.raises(ValueError):
        compare_modes([a, b])


def test_worker_env(monkeypatch, tmp_path):
    monkeypatch.setenv("COVEBO_WORKERS", "2")
    spec = ExperimentSpec(config("random", budget=60), replications=2, stride=10,
                          out_dir=tmp_path / "par")
    par = run_experiment(spec)
    monkeypatch.setenv("COVEBO_WORKERS", "1")
    seq = run_experiment(ExperimentSpec(config("random", budget=60), replications=2, stride=10,
                                        out_dir=tmp_path / "seq"))
    assert (tmp_path / "par" / "trajectory.csv").read_bytes() == \
        (tmp_path / "seq" / "trajectory.csv").read_bytes()
    assert par.final_scores == seq.final_scores


class TestCli:
    def test_defaults(self, capsys):
        assert cli.main(["defaults"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["acquisition"]["num_candidates"] == 512
        assert doc["trust_region"]["length_init"] == 0.8
        assert doc["replications"] == 10

    def test_tasks_list(self, capsys):
        assert cli.main(["tasks", "list"]) == 0
        out = capsys.readouterr().out
        assert "clustered\tdim=10\tT=6" in out
        assert "rover\tdim=20\tT=4" in out

    def test_cover(self, tmp_path, capsys):
        path = tmp_path / "m.csv"
        ObjectiveMatrix(np.array([[3.0, 3, 0, 0], [0, 0, 3, 3], [2, 2, 2, 2]])).to_csv(path)
        assert cli.main(["cover", "--k", "2", "--input", str(path)]) == 0
        assert json.loads(capsys.readouterr().out)["score"] == 10.0
        assert cli.main(["cover", "--k", "2", "--input", str(path), "--exact"]) == 0
        assert json.loads(capsys.readouterr().out)["score"] == 12.0

    def test_cover_bad_input(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        assert cli.main(["cover", "--k", "1", "--input", str(path)]) == 1

    def test_run(self, tmp_path, capsys):
        out = tmp_path / "res"
        code = cli.main(["run", "--task", "clustered", "--k", "2", "--budget", "42", "--mode", "mocobo",
                         "--seed", "1", "--reps", "2", "--out", str(out), "--stride", "8",
                         "--n-init", "10", "--batch-size", "4", "--candidates", "32",
                         "--task-param", "T=4", "--task-param", "K=2", "--task-param", "d=3"])
        assert code == 0
        rows = read_trajectory_csv(out / "trajectory.csv")
        assert rows[-1][0] == 42
        assert json.loads((out / "summary.json").read_text())["config"]["seed"] == 1

    def test_config_file_overrides_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "mode": ["random", "per_objective"], "evaluation_budget": 60, "n_init": 10,
            "task_params": TASK, "K": 2, "replications": 2, "stride": 10,
            "acquisition": {"num_candidates": 16, "batch_size": 4},
            "surrogate": {"n_restarts": 1, "max_iter": 10},
        }))
        out = tmp_path / "cmp"
        assert cli.main(["run", "--budget", "999", "--out", str(out), "--config", str(cfg)]) == 0
        rows = read_trajectory_csv(out / "comparison.csv")
        assert {r[1] for r in rows} == {"random", "per_objective", CEILING_MODE}
        assert max(r[0] for r in rows) == 60

    @pytest.mark.parametrize("argv", [
        ["run", "--out", "x", "--mode", "nope"],
        ["run", "--out", "x", "--k", "9"],
        ["run", "--out", "x", "--budget", "5"],
        ["run"],
        ["frobnicate"],
    ])
    def test_configuration_errors(self, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli.main(argv) == 1
