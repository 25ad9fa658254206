"""Coverage optimization loop and baseline strategies.

``mocobo`` keeps ``K`` trust regions, one per member of the greedy covering
set of everything evaluated so far.  Each step fits one surrogate per
objective, proposes ``q`` points per region by coverage improvement, and
evaluates all ``K * q`` of them.

The baselines reuse the same search machinery:

* ``random``: uniform sampling of the whole budget.
* ``per_objective``: ``T`` single-objective trust-region searches.
* ``oracle_partition``: ``K`` searches, search ``j`` maximising the sum of
  the objectives in block ``j`` of a given partition.

Every mode shares the same initial design for a given seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from .acquisition import AcquisitionConfig, acquire_batch
from .coverage import CoveringSet, coverage_score, greedy_cover
from .surrogate import GaussianProcessSurrogate
from .trust_region import TrustRegionConfig, TrustRegionState, tr_candidate_box, tr_update

MODES = ("mocobo", "random", "per_objective", "oracle_partition")

# stream ids for np.random.default_rng([seed, stream, ...]); nonzero because
# SeedSequence ignores trailing zero words ([s, 0] seeds like plain s)
_INIT_STREAM = 0x1D17
_RANDOM_STREAM = 0x2A4D
_SEARCH_STREAM = 0x3E4C
_FIT_STREAM = 0x4F17


class RunAborted(RuntimeError):
    """A task evaluation failed; ``partial`` holds the result up to that point."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class RunConfig:
    task: str = "clustered"
    task_params: dict = field(default_factory=dict)
    K: int = 3
    evaluation_budget: int = 2000
    n_init: int = 100
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    trust_region: dict = field(default_factory=dict)  # overrides for TrustRegionConfig
    surrogate: dict = field(default_factory=lambda: {"n_restarts": 1, "max_iter": 50})
    max_train: int = 1000
    train_fill: str = "uniform"
    seed: int = 0
    mode: str = "mocobo"
    partition: tuple | None = None
    T: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("K", "evaluation_budget", "n_init", "max_train"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.train_fill not in ("uniform", "local"):
            raise ValueError(f"train_fill must be 'uniform' or 'local', got {self.train_fill!r}")
        if self.evaluation_budget < self.n_init:
            raise ValueError(
                f"evaluation_budget {self.evaluation_budget} is below n_init {self.n_init}"
            )
        if self.T is not None and not 1 <= self.K <= self.T:
            raise ValueError(f"need 1 <= K <= T, got K={self.K}, T={self.T}")
        if isinstance(self.acquisition, dict):
            object.__setattr__(self, "acquisition", AcquisitionConfig(**self.acquisition))
        if self.partition is not None:
            part = tuple(tuple(int(t) for t in block) for block in self.partition)
            object.__setattr__(self, "partition", part)
            if len(part) != self.K:
                raise ValueError(f"partition has {len(part)} blocks but K={self.K}")
            flat = sorted(t for block in part for t in block)
            if len(set(flat)) != len(flat) or any(len(b) == 0 for b in part):
                raise ValueError("partition blocks must be non-empty and disjoint")
            if self.T is not None and flat != list(range(self.T)):
                raise ValueError("partition must cover every objective")
        TrustRegionConfig.for_problem(2, 1, **self.trust_region)  # validate overrides

    def replace(self, **changes) -> "RunConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["acquisition"] = asdict(self.acquisition)
        out["partition"] = None if self.partition is None else [list(b) for b in self.partition]
        return out

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def steps_for(self, batch_per_step) -> int:
        return (self.evaluation_budget - self.n_init) // batch_per_step


@dataclass
class RunResult:
    config: RunConfig
    X: np.ndarray
    Y: np.ndarray
    step: np.ndarray  # 0 for the initial design
    region: np.ndarray  # -1 for the initial design
    trajectory: np.ndarray  # best coverage after each evaluation
    cover: CoveringSet
    n_steps: int
    tr_history: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def n_evaluations(self) -> int:
        return len(self.X)

    @property
    def final_score(self) -> float:
        return float(self.trajectory[-1])

    @property
    def cover_points(self) -> np.ndarray:
        return self.X[list(self.cover.members)]

    def records(self):
        for i in range(self.n_evaluations):
            yield {
                "step": int(self.step[i]),
                "region": int(self.region[i]),
                "x": [float(v) for v in self.X[i]],
                "y": [float(v) for v in self.Y[i]],
                "best_coverage": float(self.trajectory[i]),
            }

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def summary(self) -> dict:
        return {
            "mode": self.config.mode,
            "seed": self.config.seed,
            "K": self.config.K,
            "n_evaluations": self.n_evaluations,
            "n_steps": self.n_steps,
            "final_score": self.final_score,
            "cover_members": list(self.cover.members),
            "cover_points": self.cover_points.tolist(),
            "extras": self.extras,
            "timing": self.timing,
            "config": self.config.to_dict(),
        }


def read_log(path):
    """Load a JSON-lines evaluation log into ``(X, Y, step, region, best_coverage)``."""
    recs = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                recs.append(json.loads(line))
    X = np.array([r["x"] for r in recs], dtype=np.float64)
    Y = np.array([r["y"] for r in recs], dtype=np.float64)
    return (X, Y, np.array([r["step"] for r in recs]), np.array([r["region"] for r in recs]),
            np.array([r["best_coverage"] for r in recs], dtype=np.float64))


# --------------------------------------------------------------------------- bookkeeping


class _Log:
    """Growing evaluation log with the best-so-far greedy cover."""

    def __init__(self, d, T, K, sink=None):
        self.X = np.empty((0, d))
        self.Y = np.empty((0, T))
        self.step, self.region, self.trajectory = [], [], []
        self.K = K
        self.best = None
        self.greedy_seconds = []
        self.sink = sink

    def greedy(self, rows=None):
        Y = self.Y if rows is None else self.Y[:rows]
        t0 = time.perf_counter()
        cover = greedy_cover(Y, self.K)
        self.greedy_seconds.append(time.perf_counter() - t0)
        return cover

    def add(self, X, Y, step, region):
        start = len(self.X)
        self.X = np.vstack([self.X, X])
        self.Y = np.vstack([self.Y, Y])
        for i in range(len(X)):
            n = start + i + 1
            cover = greedy_cover(self.Y[:n], self.K)
            if self.best is None or cover.score > self.best.score:
                self.best = cover
            self.step.append(step)
            self.region.append(region[i] if np.ndim(region) else region)
            self.trajectory.append(self.best.score)
            if self.sink is not None:
                self.sink.write(json.dumps({
                    "step": int(step), "region": int(self.region[-1]),
                    "x": [float(v) for v in X[i]], "y": [float(v) for v in Y[i]],
                    "best_coverage": float(self.best.score),
                }) + "\n")

    def result(self, config, n_steps, tr_history, started, extras=None):
        return RunResult(
            config=config,
            X=self.X,
            Y=self.Y,
            step=np.asarray(self.step, dtype=np.int64),
            region=np.asarray(self.region, dtype=np.int64),
            trajectory=np.asarray(self.trajectory, dtype=np.float64),
            cover=self.best,
            n_steps=n_steps,
            tr_history=tr_history,
            timing={
                "total_seconds": time.perf_counter() - started,
                "greedy_seconds": list(self.greedy_seconds),
            },
            extras=dict(extras or {}),
        )


def _evaluate(task, X, log, config, n_steps, tr_history, started):
    try:
        Y = np.asarray(task.evaluate_many(X), dtype=np.float64)
        if Y.shape != (len(X), task.n_objectives) or not np.all(np.isfinite(Y)):
            raise ValueError("task returned malformed or non-finite objective values")
    except Exception as exc:
        if log.sink is not None:
            log.sink.flush()
        partial = log.result(config, n_steps, tr_history, started)
        raise RunAborted(f"task evaluation failed at step {n_steps}: {exc}", partial) from exc
    return Y


def _initial_design(config, d):
    return np.random.default_rng([config.seed, _INIT_STREAM]).random((config.n_init, d))


def select_training_subset(M, cover_members, latest, max_train, rng, *, fill="uniform", X=None,
                           centers=None):
    """Indices of at most ``max_train`` rows used to fit the surrogates.

    Keeps the cover members, the latest batch and the best rows of every
    column of ``M``.  The rest is a uniform draw from the remaining rows
    (``fill="uniform"``) or the rows of ``X`` closest to any of ``centers``
    (``fill="local"``).  All rows are used when there are few enough.
    """
    n = len(M)
    if n <= max_train:
        return np.arange(n)
    keep = dict.fromkeys(int(i) for i in cover_members)
    keep.update(dict.fromkeys(int(i) for i in latest))
    per_col = max(1, max_train // (4 * M.shape[1]))
    for t in range(M.shape[1]):
        top = np.argsort(-M[:, t], kind="stable")[:per_col]
        keep.update(dict.fromkeys(int(i) for i in top))
    chosen = np.fromiter(keep, dtype=np.int64)[:max_train]
    need = max_train - len(chosen)
    if need > 0:
        rest = np.setdiff1d(np.arange(n), chosen)
        if fill == "uniform":
            extra = rng.choice(rest, need, replace=False)
        elif fill == "local":
            C = np.asarray(centers, dtype=np.float64)
            dist = np.min(((X[rest, None, :] - C[None]) ** 2).sum(-1), axis=1)
            extra = rest[np.argsort(dist, kind="stable")[:need]]
        else:
            raise ValueError(f"unknown fill policy {fill!r}")
        chosen = np.concatenate([chosen, extra])
    return np.sort(chosen)


class _CoverSearch:
    """``K`` trust regions maximising coverage of the columns of ``reduce(Y)``."""

    def __init__(self, config, d, K, reduce, search_id, q):
        self.config = config
        self.K = K
        self.reduce = reduce
        self.search_id = search_id
        self.acq = AcquisitionConfig(**{**asdict(config.acquisition), "batch_size": q})
        self.tr_config = TrustRegionConfig.for_problem(d, q, **config.trust_region)
        self.X = np.empty((0, d))
        self.M = None
        self.states = None
        self.models = None
        self.latest = np.empty(0, dtype=np.int64)

    def add(self, X, Y):
        M = self.reduce(Y)
        start = len(self.X)
        self.X = np.vstack([self.X, X])
        self.M = M if self.M is None else np.vstack([self.M, M])
        self.latest = np.arange(start, len(self.X))

    def _place_regions(self, cover):
        centers = self.X[list(cover.members)]
        if self.states is None:
            self.states = [TrustRegionState.initial(c, self.tr_config) for c in centers]
            self.region_member = list(cover.members)
            return
        # keep region identity: match new members to the previous centers
        prev = np.array([s.center for s in self.states])
        cost = ((prev[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        rows, cols = linear_sum_assignment(cost)
        members = list(cover.members)
        assigned = [None] * len(self.states)
        for r, c in zip(rows, cols):
            assigned[r] = c
        self.states = [s.recenter(centers[assigned[k]]) for k, s in enumerate(self.states)]
        self.region_member = [members[assigned[k]] for k in range(len(self.states))]

    def propose(self, step):
        cover = greedy_cover(self.M, self.K)
        self.cover_before = cover
        self._place_regions(cover)
        fit_rng = np.random.default_rng([self.config.seed, _FIT_STREAM, self.search_id, step])
        idx = select_training_subset(self.M, cover.members, self.latest, self.config.max_train,
                                     fit_rng, fill=self.config.train_fill, X=self.X,
                                     centers=[s.center for s in self.states])
        if self.models is None:
            self.models = [GaussianProcessSurrogate(**self.config.surrogate)
                           for _ in range(self.M.shape[1])]
        models = self.models
        for t, gp in enumerate(models):
            gp.set_params(random_state=fit_rng).fit(self.X[idx], self.M[idx, t])
        ls = np.exp(np.mean([np.log(m.hyperparams_.lengthscales) for m in models], axis=0))
        proposals, diagnostics = [], []
        for k, state in enumerate(self.states):
            rng = np.random.default_rng([self.config.seed, _SEARCH_STREAM, self.search_id, step, k])
            box = tr_candidate_box(state, ls)
            batch = acquire_batch(models, self.M, self.K, cover.score, box, self.acq, rng,
                                  center=state.center, cover=cover)
            proposals.append(batch.points)
            diagnostics.append(batch.diagnostics())
        self.diagnostics = diagnostics
        self.lengthscales = ls
        return proposals

    def update(self, proposals, Y_blocks):
        """Add the evaluated proposals and update each region's counters."""
        start = len(self.X)
        for pts, Y in zip(proposals, Y_blocks):
            self.add(pts, Y)
        self.latest = np.arange(start, len(self.X))
        new_cover = greedy_cover(self.M, self.K)
        improved = new_cover.score > self.cover_before.score
        members = set(new_cover.members)
        successes = []
        offset = start
        for k, pts in enumerate(proposals):
            own = range(offset, offset + len(pts))
            offset += len(pts)
            successes.append(bool(improved and any(i in members for i in own)))
        self.states = [tr_update(s, self.tr_config, ok) for s, ok in zip(self.states, successes)]
        return {
            "score_before": self.cover_before.score,
            "score_after": new_cover.score,
            "successes": successes,
            "regions": [s.snapshot() for s in self.states],
            "acquisition": self.diagnostics,
        }


# --------------------------------------------------------------------------- runs


def _check_task(config, task):
    if config.T is not None and config.T != task.n_objectives:
        raise ValueError(f"config T={config.T} but task has {task.n_objectives} objectives")
    if not 1 <= config.K <= task.n_objectives:
        raise ValueError(f"need 1 <= K <= T, got K={config.K}, T={task.n_objectives}")


def mocobo_run(config: RunConfig, task, log_sink=None) -> RunResult:
    if config.mode != "mocobo":
        raise ValueError(f"mocobo_run needs mode='mocobo', got {config.mode!r}")
    _check_task(config, task)
    return _search_run(config, task, [lambda Y: Y], config.K, log_sink)


def _search_run(config, task, reducers, search_K, log_sink, extras_fn=None):
    """Run one or more cover searches round-robin on a shared initial design."""
    started = time.perf_counter()
    d, T, q = task.dim, task.n_objectives, config.acquisition.batch_size
    log = _Log(d, T, config.K, log_sink)
    history = []
    X0 = _initial_design(config, d)
    Y0 = _evaluate(task, X0, log, config, 0, history, started)
    log.add(X0, Y0, 0, -1)
    searches = [_CoverSearch(config, d, search_K, r, i, q) for i, r in enumerate(reducers)]
    for s in searches:
        s.add(X0, Y0)
    per_step = len(searches) * search_K * q
    n_steps = config.steps_for(per_step)
    for step in range(1, n_steps + 1):
        for sid, search in enumerate(searches):
            proposals = search.propose(step)
            X = np.vstack(proposals)
            Y = _evaluate(task, X, log, config, step - 1, history, started)
            regions = np.repeat(np.arange(len(proposals)), [len(p) for p in proposals])
            if len(searches) > 1:
                regions = regions + sid * search_K
            log.add(X, Y, step, regions)
            blocks = np.split(Y, np.cumsum([len(p) for p in proposals])[:-1])
            record = search.update(proposals, blocks)
            record.update(step=step, search=sid)
            history.append(record)
    extras = extras_fn(log) if extras_fn else {}
    return log.result(config, n_steps, history, started, extras)


def _random_run(config, task, log_sink):
    started = time.perf_counter()
    log = _Log(task.dim, task.n_objectives, config.K, log_sink)
    X0 = _initial_design(config, task.dim)
    log.add(X0, _evaluate(task, X0, log, config, 0, [], started), 0, -1)
    rest = config.evaluation_budget - config.n_init
    if rest:
        X = np.random.default_rng([config.seed, _RANDOM_STREAM]).random((rest, task.dim))
        log.add(X, _evaluate(task, X, log, config, 1, [], started), 1, -1)
    return log.result(config, int(rest > 0), [], started)


def baseline_run(config: RunConfig, task, log_sink=None) -> RunResult:
    _check_task(config, task)
    if config.mode == "random":
        return _random_run(config, task, log_sink)
    if config.mode == "per_objective":
        T = task.n_objectives
        reducers = [(lambda Y, t=t: Y[:, [t]]) for t in range(T)]

        def extras(log):
            return {"t_solution_score": float(log.Y.max(axis=0).sum())}

        return _search_run(config, task, reducers, 1, log_sink, extras)
    if config.mode == "oracle_partition":
        partition = config.partition
        if partition is None:
            partition = getattr(task, "partition", None)
        if partition is None:
            raise ValueError("oracle_partition mode needs a partition")
        partition = tuple(tuple(b) for b in partition)
        if len(partition) != config.K:
            raise ValueError(f"partition has {len(partition)} blocks but K={config.K}")
        if sorted(t for b in partition for t in b) != list(range(task.n_objectives)):
            raise ValueError("partition must cover every objective exactly once")
        reducers = [(lambda Y, b=list(b): Y[:, b].sum(axis=1, keepdims=True)) for b in partition]

        def extras(log):
            incumbents = [int(np.argmax(log.Y[:, list(b)].sum(axis=1))) for b in partition]
            return {"incumbents": incumbents,
                    "incumbent_score": coverage_score(log.Y, sorted(set(incumbents)))}

        return _search_run(config, task, reducers, 1, log_sink, extras)
    raise ValueError(f"baseline_run does not handle mode {config.mode!r}")


def run(config: RunConfig, task, log_sink=None) -> RunResult:
    """Dispatch on ``config.mode``."""
    if config.mode == "mocobo":
        return mocobo_run(config, task, log_sink)
    return baseline_run(config, task, log_sink)


def extract_trajectory(result: RunResult, stride: int, budget: int | None = None):
    """``(evaluations, best_coverage)`` at every multiple of ``stride``.

    Values are the running maximum of the greedy cover score over log
    prefixes.  The series runs up to ``budget`` (default: the config's
    evaluation budget); counts past the end of the log carry the final value.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    budget = result.config.evaluation_budget if budget is None else budget
    counts = np.arange(stride, budget + 1, stride)
    if counts.size == 0 or counts[-1] != budget:
        counts = np.append(counts, budget)
    traj = result.trajectory
    values = traj[np.minimum(counts, len(traj)) - 1]
    return counts, values


def prefix_trajectory(Y, K):
    """Running max of greedy cover scores over prefixes of ``Y`` (reference path)."""
    Y = np.asarray(Y, dtype=np.float64)
    out, best = np.empty(len(Y)), -math.inf
    for n in range(1, len(Y) + 1):
        best = max(best, greedy_cover(Y[:n], K).score)
        out[n - 1] = best
    return out


class CoverageOptimizer(BaseEstimator):
    """Estimator-style front end: ``CoverageOptimizer(K=3).optimize(task)``."""

    def __init__(self, K=3, mode="mocobo", evaluation_budget=2000, n_init=100,
                 num_candidates=512, batch_size=20, realizations=1, max_train=1000,
                 n_restarts=1, max_iter=50, seed=0, partition=None):
        self.K = K
        self.mode = mode
        self.evaluation_budget = evaluation_budget
        self.n_init = n_init
        self.num_candidates = num_candidates
        self.batch_size = batch_size
        self.realizations = realizations
        self.max_train = max_train
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.seed = seed
        self.partition = partition

    def to_config(self, task) -> RunConfig:
        return RunConfig(
            task=getattr(task, "id", "task"), K=self.K, mode=self.mode,
            evaluation_budget=self.evaluation_budget, n_init=self.n_init,
            acquisition=AcquisitionConfig(self.num_candidates, self.batch_size, self.realizations),
            surrogate={"n_restarts": self.n_restarts, "max_iter": self.max_iter},
            max_train=self.max_train, seed=self.seed, partition=self.partition,
        )

    def optimize(self, task):
        self.result_ = run(self.to_config(task), task)
        self.cover_ = self.result_.cover
        self.cover_points_ = self.result_.cover_points
        self.score_ = self.result_.final_score
        self.trajectory_ = self.result_.trajectory
        return self
