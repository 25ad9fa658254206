"""Coverage scoring and covering-set selection over observed objective values.

Everything here operates on an ``(n, T)`` table of objective values (rows are
evaluated points, columns are objectives, larger is better).  The coverage
score of a set of rows is the sum over columns of the best value any member
attains.  Picking the best ``K`` rows is NP-hard, so the optimizer relies on
the greedy construction in :func:`greedy_cover`; :func:`brute_force_cover` is
the exact (exponential) oracle used to check it.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_objective_values, check_positive_int

DEFAULT_MAX_SUBSETS = 10**7

# upper bound on floats materialised per chunk in the vectorised CI scan
_CHUNK_FLOATS = 4_000_000


class EnumerationLimitError(RuntimeError):
    """Raised when exhaustive enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class ObjectiveMatrix:
    """Observed objective values, one row per evaluated point."""

    values: np.ndarray

    def __post_init__(self):
        arr = check_objective_values(self.values, allow_empty=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def append(self, rows) -> "ObjectiveMatrix":
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.T:
            raise ValueError(f"rows have {rows.shape[1]} objectives, expected {self.T}")
        return ObjectiveMatrix(np.vstack([self.values, rows]))

    @classmethod
    def from_csv(cls, path) -> "ObjectiveMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file")
            expected = [f"obj_{t + 1}" for t in range(len(header))]
            if [h.strip() for h in header] != expected:
                raise ValueError(f"{path}: header must be {','.join(expected)}")
            rows = [[float(v) for v in row] for row in reader if row]
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise ValueError(f"{path}: data row {i} has {len(row)} fields, expected {len(header)}")
        values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
        return cls(values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"obj_{t + 1}" for t in range(self.T)])
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class CoveringSet:
    """Member rows of a covering set with per-objective incumbents and score."""

    members: tuple
    incumbent_values: np.ndarray = field(repr=False)
    score: float

    def __len__(self):
        return len(self.members)


def _values(matrix) -> np.ndarray:
    if isinstance(matrix, ObjectiveMatrix):
        return matrix.values
    return check_objective_values(matrix, allow_empty=True)


def _make_cover(Y, members) -> CoveringSet:
    g = Y[list(members)].max(axis=0)
    return CoveringSet(tuple(int(i) for i in members), g, float(g.sum()))


def coverage_score(matrix, subset) -> float:
    """Sum over objectives of the best value attained by any row in ``subset``."""
    Y = _values(matrix)
    idx = list(subset)
    if not idx:
        raise ValueError("coverage score of an empty subset is undefined")
    for i in idx:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
            raise ValueError(f"row index {i!r} is not an integer")
        if not 0 <= i < Y.shape[0]:
            raise ValueError(f"row index {i} out of range for {Y.shape[0]} rows")
    if len(set(idx)) != len(idx):
        raise ValueError(f"subset {idx} contains duplicate indices")
    return float(Y[idx].max(axis=0).sum())


def greedy_cover(matrix, K: int, *, parallel: bool = True) -> CoveringSet:
    """Greedy (1 - 1/e)-approximate maximizer of the coverage score.

    Runs ``min(K, n)`` rounds; each round adds the row with the largest
    marginal coverage gain.  Ties go to the lowest row index, so a round in
    which every gain is zero still adds the lowest-index unused row.

    With ``parallel=True`` all marginal gains of a round are computed as one
    array operation; ``parallel=False`` walks the rows one at a time.  Both
    paths make identical selections.
    """
    K = check_positive_int(K, "K")
    Y = _values(matrix)
    n, T = Y.shape
    if n == 0:
        raise ValueError("cannot build a covering set from an empty matrix")
    g = np.full(T, -np.inf)
    selected = np.zeros(n, dtype=bool)
    members = []
    for _ in range(min(K, n)):
        if parallel:
            totals = np.maximum(Y, g).sum(axis=1)
            totals[selected] = -np.inf
            best = int(np.argmax(totals))
        else:
            best, best_total = -1, -np.inf
            for i in range(n):
                if selected[i]:
                    continue
                total = np.maximum(Y[i], g).sum()
                if best < 0 or total > best_total:
                    best, best_total = i, total
        members.append(best)
        selected[best] = True
        g = np.maximum(g, Y[best])
    return CoveringSet(tuple(members), g, float(g.sum()))


def brute_force_cover(matrix, K: int, *, max_subsets: int = DEFAULT_MAX_SUBSETS) -> CoveringSet:
    """Exact best covering set of size ``min(K, n)`` by exhaustive enumeration.

    Among equally good subsets the lexicographically smallest index tuple
    wins.  Raises :class:`EnumerationLimitError` when the number of subsets
    exceeds ``max_subsets``.
    """
    K = check_positive_int(K, "K")
    Y = _values(matrix)
    n = Y.shape[0]
    if n == 0:
        raise ValueError("cannot build a covering set from an empty matrix")
    k = min(K, n)
    total = math.comb(n, k)
    if total > max_subsets:
        raise EnumerationLimitError(
            f"C({n}, {k}) = {total} subsets exceeds the enumeration cap max_subsets={max_subsets}"
        )
    chunk = max(1, _CHUNK_FLOATS // (k * Y.shape[1]))
    combos = itertools.combinations(range(n), k)
    best_members, best_score = None, -np.inf
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        scores = Y[block].max(axis=1).sum(axis=1)
        j = int(np.argmax(scores))
        if best_members is None or scores[j] > best_score:
            best_members, best_score = block[j], scores[j]
    return _make_cover(Y, best_members)


def coverage_improvement(matrix, K: int, current_score: float, candidate_row) -> float:
    """Coverage gain from appending ``candidate_row`` and re-running the greedy cover."""
    Y = _values(matrix)
    row = np.asarray(candidate_row, dtype=np.float64).ravel()
    if row.shape[0] != Y.shape[1]:
        raise ValueError(f"candidate has {row.shape[0]} objectives, expected {Y.shape[1]}")
    if not np.all(np.isfinite(row)):
        raise ValueError("candidate values must be finite")
    augmented = np.vstack([Y, row])
    return max(0.0, greedy_cover(augmented, K).score - current_score)


def batch_coverage_improvement(matrix, K: int, current_score: float, candidates) -> np.ndarray:
    """:func:`coverage_improvement` for many candidate rows at once.

    Each candidate is treated independently (the matrix is augmented by one
    row at a time).  Instead of ``m`` full greedy runs this replays the greedy
    trajectory of the base matrix once: a candidate either loses every round
    (its augmented cover equals the base cover) or wins some round ``r``,
    after which only that candidate's remaining rounds are recomputed.  The
    appended row has the highest index, so it must strictly beat the base
    round winner to be picked, which reproduces the lowest-index tie rule.
    """
    K = check_positive_int(K, "K")
    Y = _values(matrix)
    n, T = Y.shape
    C = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if C.shape[1] != T:
        raise ValueError(f"candidates have {C.shape[1]} objectives, expected {T}")
    if not np.all(np.isfinite(C)):
        raise ValueError("candidate values must be finite")
    m = C.shape[0]
    rounds = min(K, n + 1)
    final_g = np.empty((m, T))
    picked = np.zeros(m, dtype=bool)
    g = np.full(T, -np.inf)
    selected = np.zeros(n, dtype=bool)
    for r in range(rounds):
        open_idx = np.flatnonzero(~picked)
        if open_idx.size == 0:
            break
        if r < n:
            totals = np.maximum(Y, g).sum(axis=1)
            totals[selected] = -np.inf
            base_pick = int(np.argmax(totals))
            base_best = totals[base_pick]
        else:
            base_pick, base_best = -1, -np.inf
        cand_totals = np.maximum(C[open_idx], g).sum(axis=1)
        winners = open_idx[cand_totals > base_best]
        if winners.size:
            G = np.maximum(C[winners], g)
            final_g[winners] = _continue_greedy(Y, G, selected, rounds - r - 1)
            picked[winners] = True
        if base_pick >= 0:
            selected[base_pick] = True
            g = np.maximum(g, Y[base_pick])
    final_g[~picked] = g
    return np.maximum(0.0, final_g.sum(axis=1) - current_score)


def _continue_greedy(Y, G, excluded, rounds):
    """Run ``rounds`` more greedy rounds for each incumbent row of ``G``."""
    if rounds <= 0:
        return G
    n, T = Y.shape
    out = np.empty_like(G)
    step = max(1, _CHUNK_FLOATS // max(1, n * T))
    for lo in range(0, G.shape[0], step):
        Gc = G[lo:lo + step].copy()
        sel = np.repeat(excluded[None, :], Gc.shape[0], axis=0)
        rows = np.arange(Gc.shape[0])
        for _ in range(rounds):
            totals = np.maximum(Y[None, :, :], Gc[:, None, :]).sum(axis=-1)
            totals[sel] = -np.inf
            j = np.argmax(totals, axis=1)
            Gc = np.maximum(Gc, Y[j])
            sel[rows, j] = True
        out[lo:lo + step] = Gc
    return out


class GreedyCoverSelector(BaseEstimator):
    """Select ``n_select`` rows of an objective table that jointly cover all columns.

    Parameters
    ----------
    n_select : int, default=2
        Size ``K`` of the covering set.
    method : {"greedy", "exact"}, default="greedy"
        ``"exact"`` enumerates every subset and is only feasible for small tables.
    parallel : bool, default=True
        Vectorise the marginal-gain scan of the greedy method.

    Attributes
    ----------
    support_ : ndarray of int
        Selected row indices, in selection order.
    incumbent_values_ : ndarray of shape (n_objectives,)
        Best value per objective among the selected rows.
    score_ : float
        Coverage score of the selection.
    """

    def __init__(self, n_select=2, method="greedy", parallel=True):
        self.n_select = n_select
        self.method = method
        self.parallel = parallel

    def fit(self, Y, y=None):
        Y = check_objective_values(Y)
        if self.method == "greedy":
            cover = greedy_cover(Y, self.n_select, parallel=self.parallel)
        elif self.method == "exact":
            cover = brute_force_cover(Y, self.n_select)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.cover_ = cover
        self.support_ = np.array(cover.members, dtype=np.intp)
        self.incumbent_values_ = cover.incumbent_values
        self.score_ = cover.score
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self, "support_")
        Y = check_objective_values(Y)
        return Y[self.support_]

    def get_support(self):
        check_is_fitted(self, "support_")
        return self.support_.copy()
