"""Hyper-rectangular trust regions with TuRBO-style side-length adaptation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TrustRegionConfig:
    length_init: float = 0.8
    length_min: float = 0.5**7
    length_max: float = 1.6
    success_tolerance: int = 3
    failure_tolerance: int = 4

    def __post_init__(self):
        if not 0 < self.length_min < self.length_init <= self.length_max:
            raise ValueError(
                "need 0 < length_min < length_init <= length_max, got "
                f"{self.length_min}, {self.length_init}, {self.length_max}"
            )
        if self.success_tolerance < 1 or self.failure_tolerance < 1:
            raise ValueError("success/failure tolerances must be positive")

    @classmethod
    def for_problem(cls, dim: int, batch_size: int, **overrides) -> "TrustRegionConfig":
        """TuRBO defaults, with failure tolerance ``max(4, ceil(dim / batch_size))``."""
        params = {"failure_tolerance": max(4, math.ceil(dim / batch_size))}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class TrustRegionState:
    center: np.ndarray
    length: float
    success_count: int = 0
    failure_count: int = 0
    restarts: int = 0

    @classmethod
    def initial(cls, center, config: TrustRegionConfig) -> "TrustRegionState":
        return cls(np.asarray(center, dtype=np.float64), config.length_init)

    def recenter(self, center) -> "TrustRegionState":
        return replace(self, center=np.asarray(center, dtype=np.float64))

    def snapshot(self) -> dict:
        out = asdict(self)
        out["center"] = [float(v) for v in self.center]
        return out


def tr_update(state: TrustRegionState, config: TrustRegionConfig, success: bool) -> TrustRegionState:
    """Record one success or failure and resize (or restart) the region."""
    length = state.length
    if success:
        succ, fail = state.success_count + 1, 0
        if succ == config.success_tolerance:
            length, succ = min(2.0 * length, config.length_max), 0
    else:
        succ, fail = 0, state.failure_count + 1
        if fail == config.failure_tolerance:
            length, fail = length / 2.0, 0
    if length < config.length_min:
        return replace(state, length=config.length_init, success_count=0, failure_count=0,
                       restarts=state.restarts + 1)
    return replace(state, length=length, success_count=succ, failure_count=fail)


def tr_candidate_box(state: TrustRegionState, lengthscales) -> tuple[np.ndarray, np.ndarray]:
    """Box of side ``length`` around the center, stretched along long lengthscales.

    Per-dimension half-widths are ``length / 2 * w_j`` with ``w`` the
    lengthscales divided by their geometric mean, then clipped to [0, 1].
    """
    ls = np.asarray(lengthscales, dtype=np.float64).ravel()
    center = np.asarray(state.center, dtype=np.float64)
    if ls.shape != center.shape:
        raise ValueError(f"{ls.size} lengthscales for a {center.size}-dimensional region")
    if not np.all(np.isfinite(ls) & (ls > 0)):
        raise ValueError("lengthscales must be finite and positive")
    weights = ls / np.exp(np.log(ls).mean())
    half = 0.5 * state.length * weights
    lower = np.clip(center - half, 0.0, 1.0)
    upper = np.clip(center + half, 0.0, 1.0)
    return lower, upper
