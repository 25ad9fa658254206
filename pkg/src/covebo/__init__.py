"""Coverage Bayesian optimization.

Find ``K`` points whose best-per-objective values cover ``T`` black-box
objectives, with one trust region per member of the current covering set.
"""

from .acquisition import AcquisitionBatch, AcquisitionConfig, acquire_batch, sample_candidates
from .coverage import (
    CoveringSet,
    GreedyCoverSelector,
    ObjectiveMatrix,
    brute_force_cover,
    coverage_improvement,
    coverage_score,
    greedy_cover,
)
from .harness import ExperimentSpec, compare_modes, run_experiment
from .optimizer import (
    CoverageOptimizer,
    RunConfig,
    RunResult,
    baseline_run,
    extract_trajectory,
    mocobo_run,
    run,
)
from .surrogate import GaussianProcessSurrogate, fit_gp
from .tasks import ObstacleCourse, make_rover_task, make_synthetic_clustered, make_task
from .trust_region import TrustRegionConfig, TrustRegionState, tr_candidate_box, tr_update

__version__ = "0.1.0"

__all__ = [
    "AcquisitionBatch", "AcquisitionConfig", "acquire_batch", "sample_candidates",
    "CoveringSet", "GreedyCoverSelector", "ObjectiveMatrix", "brute_force_cover",
    "coverage_improvement", "coverage_score", "greedy_cover",
    "ExperimentSpec", "compare_modes", "run_experiment",
    "CoverageOptimizer", "RunConfig", "RunResult", "baseline_run", "extract_trajectory",
    "mocobo_run", "run",
    "GaussianProcessSurrogate", "fit_gp",
    "ObstacleCourse", "make_rover_task", "make_synthetic_clustered", "make_task",
    "TrustRegionConfig", "TrustRegionState", "tr_candidate_box", "tr_update",
]
