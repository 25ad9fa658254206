import itertools

import numpy as np
import pytest

from covebo.trust_region import TrustRegionConfig, TrustRegionState, tr_candidate_box, tr_update


def reference_lengths(outcomes, cfg):
    """Streak-based automaton: (outcome kind, streak length) drives every resize."""
    length, restarts = cfg.length_init, 0
    kind, streak = None, 0
    trace = []
    for ok in outcomes:
        if ok != kind:
            kind, streak = ok, 0
        streak += 1
        if ok and streak == cfg.success_tolerance:
            length = min(length * 2, cfg.length_max)
            streak = 0
        elif not ok and streak == cfg.failure_tolerance:
            length = length * 0.5
            streak = 0
        if length < cfg.length_min:
            length, restarts, kind, streak = cfg.length_init, restarts + 1, None, 0
        trace.append((length, restarts))
    return trace


CONFIGS = [
    TrustRegionConfig(),
    TrustRegionConfig(length_init=0.4, length_min=0.15, length_max=0.8, success_tolerance=2, failure_tolerance=2),
    TrustRegionConfig(length_init=0.5, length_min=0.2, length_max=1.0, success_tolerance=1, failure_tolerance=1),
    TrustRegionConfig(length_init=1.6, length_min=0.5, length_max=1.6, success_tolerance=3, failure_tolerance=2),
]


@pytest.mark.parametrize("cfg", CONFIGS)
def test_exhaustive_sequences_match_reference(cfg):
    for n in range(1, 13):
        for outcomes in itertools.product([True, False], repeat=n):
            state = TrustRegionState.initial(np.full(2, 0.5), cfg)
            ref = reference_lengths(outcomes, cfg)
            for ok, (length, restarts) in zip(outcomes, ref):
                state = tr_update(state, cfg, ok)
                assert state.length == length
                assert state.restarts == restarts
                assert cfg.length_min <= state.length <= cfg.length_max
                assert state.success_count == 0 or state.failure_count == 0


def test_three_successes_double_to_cap():
    cfg = TrustRegionConfig(success_tolerance=3)
    state = TrustRegionState.initial([0.5], cfg)
    for _ in range(2):
        state = tr_update(state, cfg, True)
        assert state.length == 0.8
    state = tr_update(state, cfg, True)
    assert state.length == 1.6


def test_four_failures_halve():
    cfg = TrustRegionConfig(failure_tolerance=4)
    state = TrustRegionState.initial([0.5], cfg)
    for _ in range(4):
        state = tr_update(state, cfg, False)
    assert state.length == 0.4


def test_drop_below_min_restarts():
    cfg = TrustRegionConfig(failure_tolerance=1)
    eps = 1e-3
    state = TrustRegionState(np.array([0.2]), 2 * cfg.length_min * (1 - eps), restarts=2)
    state = tr_update(state, cfg, False)
    assert state.length == cfg.length_init
    assert state.restarts == 3
    np.testing.assert_array_equal(state.center, [0.2])


def test_interleaved_outcomes_reset_opposing_counter():
    cfg = TrustRegionConfig(success_tolerance=2, failure_tolerance=2)
    state = TrustRegionState.initial([0.5], cfg)
    for ok in (True, False, True, False, True, False):
        state = tr_update(state, cfg, ok)
        assert state.length == 0.8


def test_failure_tolerance_default():
    assert TrustRegionConfig.for_problem(10, 20).failure_tolerance == 4
    assert TrustRegionConfig.for_problem(100, 20).failure_tolerance == 5


def test_invalid_config():
    with pytest.raises(ValueError):
        TrustRegionConfig(length_init=0.001)


class TestCandidateBox:
    def test_full_width_box(self):
        state = TrustRegionState(np.full(2, 0.5), 1.0)
        lo, hi = tr_candidate_box(state, [0.3, 0.3])
        np.testing.assert_allclose(lo, 0.0)
        np.testing.assert_allclose(hi, 1.0)

    def test_corner_is_clipped(self):
        state = TrustRegionState(np.zeros(3), 0.4)
        lo, hi = tr_candidate_box(state, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(lo, 0.0)
        np.testing.assert_allclose(hi, 0.2)

    def test_anisotropic_half_widths(self):
        state = TrustRegionState(np.full(2, 0.5), 0.8)
        lo, hi = tr_candidate_box(state, [2.0, 0.5])
        np.testing.assert_allclose((hi - lo) / 2, [0.5, 0.2])
        state = TrustRegionState(np.full(2, 0.9), 0.8)
        lo, hi = tr_candidate_box(state, [2.0, 0.5])
        # pre-clip half-widths (0.8, 0.2)
        np.testing.assert_allclose(lo, [0.1, 0.7])
        np.testing.assert_allclose(hi, [1.0, 1.0])

    def test_box_always_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            d = int(rng.integers(1, 6))
            state = TrustRegionState(rng.random(d), float(rng.uniform(0.01, 1.6)))
            lo, hi = tr_candidate_box(state, np.exp(rng.normal(size=d)))
            assert np.all((0 <= lo) & (lo <= state.center) & (state.center <= hi) & (hi <= 1))

    def test_bad_lengthscales(self):
        state = TrustRegionState(np.full(2, 0.5), 0.8)
        with pytest.raises(ValueError):
            tr_candidate_box(state, [1.0, -1.0])
