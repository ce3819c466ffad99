"""Safe stochastic linear bandits: policies, geometry, and experiment harness."""

from .estimation import ConfidenceParams, RlsEstimator, confidence_radius_phased, confidence_radius_rls
from .environment import ProblemInstance, feedback, is_safe, optimal_action, sample_instance, trial_rng
from .geometry import (
    Box,
    ConvexBall,
    ConvexBox,
    FiniteStarConvex,
    HalfSpace,
    UnitBall,
    action_max_scaling,
    box_contained,
    box_intersects,
    direction_grid,
    inner_radius,
    ray_optimistic_scaling,
    ray_pessimistic_scaling,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    TrialResult,
    check_invariants,
    export_results,
    run_experiment,
    run_trial,
)
from .policies import (
    ALGORITHMS,
    CRofulPolicy,
    LtsPolicy,
    OplbPolicy,
    PdPolicy,
    RofulPolicy,
    SafePePolicy,
    adaptive_kappa,
    make_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Box",
    "CRofulPolicy",
    "ConfidenceParams",
    "ConvexBall",
    "ConvexBox",
    "ExperimentConfig",
    "ExperimentResult",
    "FiniteStarConvex",
    "HalfSpace",
    "LtsPolicy",
    "OplbPolicy",
    "PdPolicy",
    "ProblemInstance",
    "RlsEstimator",
    "RofulPolicy",
    "SafePePolicy",
    "TrialResult",
    "UnitBall",
    "action_max_scaling",
    "adaptive_kappa",
    "box_contained",
    "box_intersects",
    "check_invariants",
    "confidence_radius_phased",
    "confidence_radius_rls",
    "direction_grid",
    "export_results",
    "feedback",
    "inner_radius",
    "is_safe",
    "make_policy",
    "optimal_action",
    "ray_optimistic_scaling",
    "ray_pessimistic_scaling",
    "run_experiment",
    "run_trial",
    "sample_instance",
    "trial_rng",
]
