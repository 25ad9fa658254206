"""Benchmark objective suites on the unit hypercube (maximisation convention).

* ``clustered``: Gaussian bumps grouped into ``K`` well-separated blocks.
  Objectives inside a block share (nearly) one maximiser, objectives in
  different blocks conflict, so ``K`` points can cover all ``T`` objectives.
  The ceiling is known from construction.
* ``rover``: a 2-D path through waypoints must avoid the obstacles of ``T``
  different courses.  Courses come in two groups whose wall gaps are
  mutually exclusive, so no single path clears every course.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._validation import check_unit_cube


class Task:
    """A deterministic vector-valued black box on ``[0, 1]^dim``."""

    id: str = "task"
    dim: int
    n_objectives: int
    ceiling: float | None = None
    partition: tuple | None = None

    def evaluate_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_many(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]

    def describe(self) -> dict:
        return {"id": self.id, "dim": self.dim, "T": self.n_objectives}


def evaluate_batch(task: Task, points) -> list:
    """Evaluate each point in order; out-of-domain points raise naming the index."""
    points = list(points)
    if not points:
        return []
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != task.dim:
        raise ValueError(f"points must have shape (n, {task.dim}), got {X.shape}")
    for i, x in enumerate(X):
        if not np.all(np.isfinite(x)) or x.min() < 0 or x.max() > 1:
            raise ValueError(f"point {i} lies outside the unit hypercube")
    return list(task.evaluate_many(X))


# --------------------------------------------------------------------------- clustered


_TASK_STREAM = 0x7A5C  # keeps task draws apart from optimizer streams


def default_sigma(d):
    return 0.12 if d <= 10 else 0.12 * math.sqrt(d / 10)


class ClusteredTask(Task):
    """Gaussian bumps ``f_t(x) = exp(-|x - c_t|^2 / (2 sigma^2))``.

    ``centers[t]`` is the maximiser of objective ``t``; ``partition`` groups
    objectives that share a block.  On construction each block's optimum of
    the summed objectives is located by multi-start local ascent, and the
    ceiling is the coverage score of those block optima.
    """

    id = "clustered"

    def __init__(self, centers, sigma, partition, params=None):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.n_objectives, self.dim = self.centers.shape
        self.sigma = float(sigma)
        self.partition = tuple(tuple(int(t) for t in block) for block in partition)
        flat = sorted(t for block in self.partition for t in block)
        if flat != list(range(self.n_objectives)):
            raise ValueError("partition must cover every objective exactly once")
        self.params = dict(params or {})
        self.block_optima = np.array([self._block_optimum(block) for block in self.partition])
        self.ceiling = float(self.evaluate_many(self.block_optima).max(axis=0).sum())

    def evaluate_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        sq = ((X[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        return np.exp(-sq / (2.0 * self.sigma**2))

    def _block_optimum(self, block):
        C = self.centers[list(block)]
        s2 = self.sigma**2

        def neg(x):
            diff = x - C
            vals = np.exp(-(diff**2).sum(1) / (2 * s2))
            return -vals.sum(), (vals[:, None] * diff).sum(0) / s2

        best_x, best_val = None, np.inf
        for start in [C.mean(0), *C]:
            res = minimize(neg, start, jac=True, method="L-BFGS-B", bounds=[(0, 1)] * self.dim,
                           options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 500})
            if res.fun < best_val:
                best_x, best_val = res.x, res.fun
        return best_x

    def describe(self):
        out = super().describe()
        out.update(self.params)
        out.update(K=len(self.partition), sigma=self.sigma, ceiling=self.ceiling,
                   partition=[list(b) for b in self.partition])
        return out


def make_synthetic_clustered(T=6, K=3, d=10, conflict_strength=1.0, seed=0, sigma=None,
                             max_tries=2000) -> ClusteredTask:
    """Random clustered task with ``K`` blocks of objectives.

    Block centers keep a pairwise distance large enough that any objective
    responds with less than ``1e-3 * conflict_strength`` at another block's
    optimum.  Objectives in a block of two or more are offset from the block
    center by at most ``sigma / 4``; singleton blocks have no offset.
    """
    if not 1 <= K <= T:
        raise ValueError(f"need 1 <= K <= T, got K={K}, T={T}")
    if d < 2:
        raise ValueError("d must be at least 2")
    if not 0 < conflict_strength < 1000:
        raise ValueError("conflict_strength must lie in (0, 1000)")
    sigma = default_sigma(d) if sigma is None else float(sigma)
    tol = 1e-3 * conflict_strength
    max_offset = sigma / 4
    separation = sigma * math.sqrt(2 * math.log(1 / tol)) + 2 * max_offset
    margin = min(max_offset, 0.49)
    rng = np.random.default_rng([seed, _TASK_STREAM])

    block_centers = []
    tries = 0
    while len(block_centers) < K:
        tries += 1
        if tries > max_tries:
            raise ValueError(
                f"cannot place {K} block centers at separation {separation:.3f} in d={d} "
                f"with sigma={sigma}"
            )
        c = rng.uniform(margin, 1 - margin, d)
        if all(np.linalg.norm(c - b) >= separation for b in block_centers):
            block_centers.append(c)

    partition = [tuple(int(t) for t in b) for b in np.array_split(np.arange(T), K)]
    centers = np.empty((T, d))
    for j, block in enumerate(partition):
        for t in block:
            if len(block) == 1:
                centers[t] = block_centers[j]
            else:
                direction = rng.normal(size=d)
                direction /= np.linalg.norm(direction)
                centers[t] = block_centers[j] + direction * rng.uniform(0, max_offset)
    task = ClusteredTask(centers, sigma, partition,
                         params={"T": T, "K": K, "d": d, "conflict_strength": conflict_strength,
                                 "seed": seed})
    F = task.evaluate_many(task.block_optima)
    for j, block in enumerate(partition):
        others = [t for t in range(T) if t not in block]
        if others and F[j, others].max() >= tol:
            raise ValueError("block separation violated; increase separation or lower sigma")
    return task


# --------------------------------------------------------------------------- rover


@dataclass(frozen=True)
class ObstacleCourse:
    """Axis-aligned rectangular obstacles ``(x0, y0, x1, y1)``; they may poke out of the unit square."""

    obstacles: tuple
    start: tuple = (0.05, 0.05)
    goal: tuple = (0.95, 0.95)
    name: str = ""

    def __post_init__(self):
        rects = tuple(tuple(float(v) for v in r) for r in self.obstacles)
        for r in rects:
            if len(r) != 4 or not (r[0] < r[2] and r[1] < r[3]):
                raise ValueError(f"bad rectangle {r}")
        object.__setattr__(self, "obstacles", rects)
        for label, p in (("start", self.start), ("goal", self.goal)):
            if penetration_depth(np.array([p], dtype=float), rects)[0] > 0:
                raise ValueError(f"{label} point {p} lies inside an obstacle")

    def to_dict(self) -> dict:
        return {"name": self.name, "start": list(self.start), "goal": list(self.goal),
                "obstacles": [list(r) for r in self.obstacles]}


def penetration_depth(points, rects):
    """Distance from each point to the nearest obstacle boundary, 0 outside obstacles."""
    P = np.asarray(points, dtype=np.float64)
    depth = np.zeros(P.shape[:-1])
    x, y = P[..., 0], P[..., 1]
    for x0, y0, x1, y1 in rects:
        inner = np.minimum(np.minimum(x - x0, x1 - x), np.minimum(y - y0, y1 - y))
        np.maximum(depth, inner, out=depth)
    return depth


def default_courses(T=4):
    """Courses in two groups whose wall gaps are mutually exclusive.

    Group A (courses 1, 4, ...) has a vertical wall at x = 0.5 with one gap
    low down.  Group B (courses 2, 3, ...) is its mirror image: a horizontal
    wall at y = 0.5 with the gap on the left.  A path that threads an A gap
    ends up below the B wall's solid half, and vice versa, so no path clears
    both groups.  The second variant of each group moves its gap and adds a
    rock that forces a detour.  Walls run past the unit square so hugging
    the border never makes them shallow.
    """
    low, high = -0.5, 1.5
    group_a = [
        [(0.45, low, 0.55, 0.10), (0.45, 0.32, 0.55, high)],
        [(0.45, low, 0.55, 0.16), (0.45, 0.38, 0.55, high), (0.70, 0.45, 0.85, 0.60)],
    ]

    def mirror(rects):
        return [(y0, x0, y1, x1) for x0, y0, x1, y1 in rects]

    # courses 1 and 4 share a route, 2 and 3 the other
    pattern = ["A", "B", "B", "A"]
    courses, used = [], {"A": 0, "B": 0}
    for t in range(T):
        group = pattern[t % 4]
        variant = group_a[used[group] % len(group_a)]
        used[group] += 1
        rects = variant if group == "A" else mirror(variant)
        courses.append(ObstacleCourse(tuple(rects), name=f"course_{t + 1}_{group}"))
    return courses


class RoverTask(Task):
    """Piecewise-linear rover paths scored on several obstacle courses.

    The policy vector holds ``dim / 2`` waypoints (x, y).  The path runs
    start -> waypoints -> goal.  Objective ``t`` is minus the weighted
    integral of penetration depth along the path on course ``t``, minus the
    excess of the path length over the straight start-goal distance.
    """

    id = "rover"

    def __init__(self, courses=None, dim=20, penalty_weight=3000.0, samples_per_segment=512,
                 T=None):
        if dim % 2:
            raise ValueError("rover dimension must be even")
        if courses is None:
            courses = default_courses(4 if T is None else T)
        self.courses = list(courses)
        if T is not None and len(self.courses) != T:
            raise ValueError(f"T={T} but {len(self.courses)} courses given")
        starts = {c.start for c in self.courses}
        goals = {c.goal for c in self.courses}
        if len(starts) != 1 or len(goals) != 1:
            raise ValueError("all courses must share start and goal")
        self.start = np.array(self.courses[0].start, dtype=np.float64)
        self.goal = np.array(self.courses[0].goal, dtype=np.float64)
        self.dim = dim
        self.n_objectives = len(self.courses)
        self.penalty_weight = float(penalty_weight)
        self.samples_per_segment = int(samples_per_segment)
        self.straight_length = float(np.linalg.norm(self.goal - self.start))

    def paths(self, X):
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        way = X.reshape(n, self.dim // 2, 2)
        start = np.broadcast_to(self.start, (n, 1, 2))
        goal = np.broadcast_to(self.goal, (n, 1, 2))
        return np.concatenate([start, way, goal], axis=1)

    def _integrals(self, X):
        nodes = self.paths(X)
        a, b = nodes[:, :-1, :], nodes[:, 1:, :]
        seg_len = np.linalg.norm(b - a, axis=-1)
        s = (np.arange(self.samples_per_segment) + 0.5) / self.samples_per_segment
        pts = a[:, :, None, :] + (b - a)[:, :, None, :] * s[None, None, :, None]
        ds = (seg_len / self.samples_per_segment)[:, :, None]
        pen = np.stack([(penetration_depth(pts, c.obstacles) * ds).sum(axis=(1, 2))
                        for c in self.courses], axis=1)
        return pen, seg_len.sum(axis=1)

    def penetration(self, X):
        """Integrated penetration depth per course, shape ``(n, T)``."""
        return self._integrals(np.atleast_2d(X))[0]

    def evaluate_many(self, X):
        pen, length = self._integrals(np.atleast_2d(X))
        return -(self.penalty_weight * pen + (length - self.straight_length)[:, None])

    def straight_policy(self):
        k = self.dim // 2
        s = np.arange(1, k + 1) / (k + 1)
        return (self.start + s[:, None] * (self.goal - self.start)).ravel()

    def describe(self):
        out = super().describe()
        out.update(penalty_weight=self.penalty_weight, courses=[c.name for c in self.courses])
        return out

    def export_courses(self, path=None):
        doc = {"start": list(self.start), "goal": list(self.goal),
               "courses": [c.to_dict() for c in self.courses]}
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
        return doc


def make_rover_task(T=4, courses=None, d=20, penalty_weight=3000.0, samples_per_segment=512):
    return RoverTask(courses=courses, dim=d, penalty_weight=penalty_weight,
                     samples_per_segment=samples_per_segment, T=T)


# --------------------------------------------------------------------------- registry


@dataclass(frozen=True)
class TaskEntry:
    factory: object
    defaults: dict = field(default_factory=dict)
    summary: str = ""


REGISTRY = {
    "clustered": TaskEntry(make_synthetic_clustered, {"T": 6, "K": 3, "d": 10, "seed": 0},
                           "Gaussian bumps in K separated blocks with a known ceiling"),
    "rover": TaskEntry(make_rover_task, {"T": 4, "d": 20},
                       "waypoint rover path over T obstacle courses"),
}


def make_task(task_id, **params) -> Task:
    try:
        entry = REGISTRY[task_id]
    except KeyError:
        raise ValueError(f"unknown task {task_id!r}; choose from {sorted(REGISTRY)}") from None
    kwargs = {**entry.defaults, **params}
    task = entry.factory(**kwargs)
    task.id = task_id
    return task


def list_tasks():
    rows = []
    for task_id, entry in REGISTRY.items():
        task = make_task(task_id)
        rows.append({"id": task_id, "dim": task.dim, "T": task.n_objectives,
                     "summary": entry.summary})
    return rows
