"""Replicated experiments, aggregation and result files.

Layout of an experiment directory::

    <out>/trajectory.csv        evaluations,mode,mean,stderr
    <out>/summary.json          final-score statistics and the run config
    <out>/run_000/log.jsonl     one JSON object per evaluation
    <out>/run_000/summary.json  per-run summary (includes wall-clock timings)
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optimizer import RunConfig, extract_trajectory, run
from .tasks import make_task

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("evaluations", "mode", "mean", "stderr")


@dataclass(frozen=True)
class ExperimentSpec:
    config: RunConfig
    replications: int = 10
    base_seed: int = 0
    out_dir: str | None = None
    stride: int = 100
    workers: int | None = None  # None: COVEBO_WORKERS or 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    def run_config(self, r) -> RunConfig:
        return self.config.replace(seed=self.base_seed + r)


@dataclass
class AggregateSummary:
    mode: str
    evaluations: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    final_scores: list
    extras: dict = field(default_factory=dict)  # name -> per-run values
    failures: dict = field(default_factory=dict)  # replication -> error text
    task: dict = field(default_factory=dict)
    out_dir: str | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_completed(self) -> int:
        return len(self.final_scores)

    @property
    def final_mean(self) -> float:
        return float(np.mean(self.final_scores))

    @property
    def final_stderr(self) -> float:
        return _stderr(np.asarray(self.final_scores))

    def extra_mean(self, name) -> float:
        return float(np.mean(self.extras[name]))

    def summary_dict(self) -> dict:
        return {
            "mode": self.mode,
            "task": self.task,
            "replications_completed": self.n_completed,
            "failures": {str(k): v for k, v in self.failures.items()},
            "final": {
                "mean": self.final_mean,
                "stderr": self.final_stderr,
                "min": float(np.min(self.final_scores)),
                "max": float(np.max(self.final_scores)),
                "per_run": [float(v) for v in self.final_scores],
            },
            "extras": {k: [float(x) for x in v] for k, v in self.extras.items()},
            "config": self.config,
        }

    def trajectory_rows(self):
        for n, m, s in zip(self.evaluations, self.mean, self.stderr):
            yield int(n), self.mode, float(m), float(s)


def _stderr(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for n, mode, mean, se in rows:
            writer.writerow([n, mode, repr(float(mean)), repr(float(se))])


def read_trajectory_csv(path):
    """Rows of ``(evaluations, mode, mean, stderr)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        return [(int(n), mode, float(m), float(s)) for n, mode, m, s in reader]


def load_summary(out_dir) -> AggregateSummary:
    """Rebuild an :class:`AggregateSummary` from the files of an experiment."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / "summary.json").read_text())
    rows = read_trajectory_csv(out_dir / "trajectory.csv")
    return AggregateSummary(
        mode=doc["mode"],
        evaluations=np.array([r[0] for r in rows]),
        mean=np.array([r[2] for r in rows]),
        stderr=np.array([r[3] for r in rows]),
        final_scores=doc["final"]["per_run"],
        extras=doc["extras"],
        failures={int(k): v for k, v in doc["failures"].items()},
        task=doc["task"],
        out_dir=str(out_dir),
        config=doc["config"],
    )


def fresh_directory(path) -> Path:
    """``path`` itself if unused, else the first free ``path_1``, ``path_2``, ..."""
    base = Path(path)
    candidate, k = base, 0
    while candidate.exists() and any(candidate.iterdir()):
        k += 1
        candidate = base.with_name(f"{base.name}_{k}")
    candidate.mkdir(parents=True, exist_ok=True)
    return candidate


def worker_limit(requested=None) -> int:
    env = os.environ.get("COVEBO_WORKERS")
    cap = int(env) if env else 1
    if cap < 1:
        raise ValueError("COVEBO_WORKERS must be a positive integer")
    return max(1, min(cap, requested)) if requested else cap


def _one_run(config: RunConfig, run_dir):
    task = make_task(config.task, **config.task_params)
    if run_dir is None:
        result = run(config, task)
    else:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / "log.jsonl", "w") as sink:
            result = run(config, task, log_sink=sink)
        (run_dir / "summary.json").write_text(json.dumps(result.summary(), indent=2))
    return result


def _safe_run(config, run_dir):
    try:
        return _one_run(config, run_dir), None
    except Exception as exc:  # recorded per run; aggregation continues
        return None, f"{type(exc).__name__}: {exc}"


def run_experiment(spec: ExperimentSpec, return_results=False):
    """Execute all replications and write the aggregate files.

    Returns the :class:`AggregateSummary`, or ``(summary, results)`` with
    ``return_results=True``.
    """
    out = fresh_directory(spec.out_dir) if spec.out_dir else None
    configs = [spec.run_config(r) for r in range(spec.replications)]
    run_dirs = [None if out is None else out / f"run_{r:03d}" for r in range(spec.replications)]
    workers = worker_limit(spec.workers)
    if workers > 1 and spec.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_safe_run, configs, run_dirs))
    else:
        outcomes = [_safe_run(c, d) for c, d in zip(configs, run_dirs)]

    results = {r: res for r, (res, err) in enumerate(outcomes) if res is not None}
    failures = {r: err for r, (res, err) in enumerate(outcomes) if err is not None}
    if not results:
        raise RuntimeError(f"all {spec.replications} replications failed: {failures}")
    if failures:
        warnings.warn(f"{len(failures)} of {spec.replications} replications failed", RuntimeWarning,
                      stacklevel=2)

    budget = spec.config.evaluation_budget
    series = [extract_trajectory(res, spec.stride, budget) for res in results.values()]
    counts = series[0][0]
    values = np.array([v for _, v in series])
    extras = {}
    for res in results.values():
        for key, val in res.extras.items():
            if isinstance(val, (int, float)):
                extras.setdefault(key, []).append(float(val))
    task = make_task(spec.config.task, **spec.config.task_params)
    summary = AggregateSummary(
        mode=spec.config.mode,
        evaluations=counts,
        mean=values.mean(axis=0),
        stderr=np.array([_stderr(col) for col in values.T]),
        final_scores=[res.final_score for res in results.values()],
        extras=extras,
        failures=failures,
        task=task.describe(),
        out_dir=None if out is None else str(out),
        config={**spec.config.to_dict(), "replications": spec.replications,
                "base_seed": spec.base_seed, "stride": spec.stride},
    )
    if out is not None:
        write_trajectory_csv(out / "trajectory.csv", summary.trajectory_rows())
        (out / "summary.json").write_text(json.dumps(summary.summary_dict(), indent=2))
    if return_results:
        return summary, [results.get(r) for r in range(spec.replications)]
    return summary


@dataclass
class ComparisonTable:
    """Per-mode mean trajectories on a shared evaluation grid."""

    evaluations: np.ndarray
    rows: list  # (evaluations, mode, mean, stderr)
    summaries: dict

    def series(self, mode):
        pts = [(n, m, s) for n, md, m, s in self.rows if md == mode]
        return np.array([p[1] for p in pts]), np.array([p[2] for p in pts])

    def final(self) -> dict:
        out = {}
        for mode in dict.fromkeys(md for _, md, _, _ in self.rows):
            mean, se = self.series(mode)
            out[mode] = (float(mean[-1]), float(se[-1]))
        return out

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.rows)


CEILING_MODE = "t_solution_ceiling"


def compare_modes(items) -> ComparisonTable:
    """Align the trajectories of several experiments.

    ``items`` may mix :class:`ExperimentSpec` (run here) and finished
    :class:`AggregateSummary` objects.  When a ``per_objective`` experiment
    is present its mean T-solution score is added as a constant series.
    """
    summaries = []
    keys = set()
    for item in items:
        summary = run_experiment(item) if isinstance(item, ExperimentSpec) else item
        cfg = summary.config
        keys.add((cfg["task"], json.dumps(cfg["task_params"], sort_keys=True), cfg["K"],
                  cfg["evaluation_budget"], cfg["stride"]))
        summaries.append(summary)
    if len(keys) > 1:
        raise ValueError("experiments differ in task, K, budget or stride")
    grid = summaries[0].evaluations
    rows = []
    by_mode = {}
    for s in summaries:
        if s.mode in by_mode:
            raise ValueError(f"mode {s.mode!r} given twice")
        by_mode[s.mode] = s
        rows.extend(s.trajectory_rows())
    per_obj = by_mode.get("per_objective")
    if per_obj is not None and "t_solution_score" in per_obj.extras:
        vals = per_obj.extras["t_solution_score"]
        mean, se = float(np.mean(vals)), _stderr(vals)
        rows.extend((int(n), CEILING_MODE, mean, se) for n in grid)
    return ComparisonTable(evaluations=grid, rows=rows, summaries=by_mode)
