"""Expected-coverage-improvement batch selection inside one trust region.

Candidates are drawn around the region center, each objective's surrogate
is sampled jointly over all candidates, and every candidate is scored by the
coverage improvement its sampled objective vector would bring to the current
greedy covering set.  The batch is the top ``q`` candidates by that score,
which approximates the joint batch criterion without scoring batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_generator
from .coverage import batch_coverage_improvement, greedy_cover


@dataclass(frozen=True)
class AcquisitionConfig:
    num_candidates: int = 512
    batch_size: int = 20
    realizations: int = 1
    perturbation_probability: float | None = None  # None -> min(1, 20 / d)

    def __post_init__(self):
        if self.num_candidates < 1 or self.batch_size < 1 or self.realizations < 1:
            raise ValueError("num_candidates, batch_size and realizations must be positive")
        if self.batch_size > self.num_candidates:
            raise ValueError(
                f"batch_size {self.batch_size} exceeds num_candidates {self.num_candidates}"
            )
        p = self.perturbation_probability
        if p is not None and not 0 < p <= 1:
            raise ValueError(f"perturbation_probability must lie in (0, 1], got {p}")


@dataclass(frozen=True)
class AcquisitionBatch:
    points: np.ndarray
    ci: np.ndarray
    optimistic_gain: np.ndarray
    candidate_indices: np.ndarray
    max_ci: float
    zero_ci_fraction: float
    degenerate_box: bool = False

    def diagnostics(self) -> dict:
        return {
            "max_ci": self.max_ci,
            "zero_ci_fraction": self.zero_ci_fraction,
            "degenerate_box": self.degenerate_box,
        }


def sample_candidates(box, m, center, rng, perturbation_probability=None):
    """Perturb ``center`` coordinate-wise inside ``box``.

    Each coordinate is redrawn uniformly in the box with probability
    ``min(1, 20/d)`` (at least one per candidate).  Returns
    ``(points, degenerate)``; a box with zero width in every dimension
    yields ``m`` copies of the center and ``degenerate=True``.
    """
    lower, upper = (np.asarray(b, dtype=np.float64) for b in box)
    center = np.asarray(center, dtype=np.float64)
    if np.any(lower > upper) or np.any(lower < 0) or np.any(upper > 1):
        raise ValueError("box must satisfy 0 <= lower <= upper <= 1")
    d = center.size
    if np.all(upper == lower):
        return np.tile(center, (m, 1)), True
    rng = as_generator(rng)
    prob = min(1.0, 20.0 / d) if perturbation_probability is None else perturbation_probability
    mask = rng.random((m, d)) < prob
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        mask[empty, rng.integers(0, d, empty.size)] = True
    draws = lower + (upper - lower) * rng.random((m, d))
    return np.where(mask, draws, center), False


def score_candidates(models, matrix, K, current_score, points, realizations, rng, cover=None):
    """Average CI and optimistic gain of each candidate over joint posterior draws."""
    Y = matrix.values if hasattr(matrix, "values") else np.asarray(matrix, dtype=np.float64)
    rng = as_generator(rng)
    if cover is None:
        cover = greedy_cover(Y, K)
    # samples[l, j, t]: realisation l of objective t at candidate j
    samples = np.stack([model.sample_y(points, realizations, rng) for model in models], axis=-1)
    ci = np.zeros(len(points))
    optimistic = np.zeros(len(points))
    for draw in samples:
        ci += batch_coverage_improvement(Y, K, current_score, draw)
        optimistic += np.maximum(draw - cover.incumbent_values, 0.0).sum(axis=1)
    return ci / realizations, optimistic / realizations


def acquire_batch(models, matrix, K, current_score, box, config: AcquisitionConfig, rng,
                  center, cover=None) -> AcquisitionBatch:
    """Pick ``config.batch_size`` candidates with the largest coverage improvement.

    ``models`` holds one fitted surrogate per column of ``matrix``.  Each
    surrogate is sampled ``config.realizations`` times jointly over the
    candidate set; CI values are averaged over realizations.  Ties (notably
    the all-zero case) fall back to the larger optimistic gain
    ``sum_t max(0, yhat_t - g_t)`` and then to the lower candidate index.
    """
    Y = matrix.values if hasattr(matrix, "values") else np.asarray(matrix, dtype=np.float64)
    if len(models) != Y.shape[1]:
        raise ValueError(f"{len(models)} surrogates for {Y.shape[1]} objectives")
    if config.num_candidates < config.batch_size:
        raise ValueError("num_candidates must be at least batch_size")
    rng = as_generator(rng)
    if cover is None:
        cover = greedy_cover(Y, K)
    points, degenerate = sample_candidates(box, config.num_candidates, center, rng,
                                           config.perturbation_probability)
    ci, optimistic = score_candidates(models, Y, K, current_score, points, config.realizations,
                                      rng, cover=cover)
    order = np.lexsort((np.arange(len(points)), -optimistic, -ci))
    top = order[:config.batch_size]
    return AcquisitionBatch(
        points=points[top],
        ci=ci[top],
        optimistic_gain=optimistic[top],
        candidate_indices=top,
        max_ci=float(ci.max()),
        zero_ci_fraction=float(np.mean(ci == 0.0)),
        degenerate_box=degenerate,
    )
