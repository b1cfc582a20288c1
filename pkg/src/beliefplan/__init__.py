"""Belief-space trajectory synthesis for switched linear systems under
probabilistic signal temporal logic."""

from .gaussian import (
    BeliefState,
    DomainError,
    InvalidCovarianceError,
    cached_quantile,
    make_belief,
    std_normal_cdf,
    std_normal_quantile,
    uncertainty_measure,
)
from .geometry import (
    BeliefCone,
    DegeneratePolytopeError,
    DiscretePredicate,
    LinearExpression,
    Polytope,
    ProbabilisticLinearPredicate,
    box_polytope,
    cone_contains,
    cone_margin,
    eval_linear,
    polytope_contains,
    polytope_sample,
    region_from_predicates,
)
from .formula import (
    And,
    Atomic,
    FormulaSyntaxError,
    InsufficientTraceError,
    NameCollisionError,
    Or,
    Release,
    Trace,
    Until,
    UnsupportedBoundError,
    always,
    atomic_label,
    atomic_propositions,
    bottom,
    conjunction,
    disjunction,
    eventually,
    horizon,
    monitor,
    monitor_word,
    named,
    parse_formula,
    top,
    until,
    release,
)
from .dynamics import (
    IllConditionedUpdateError,
    NoObservationError,
    SwitchedSystem,
    SystemMode,
    kalman_update,
    noise_cov,
    predict,
    propagate_mlo,
    sample_observation,
    step_truth,
)
from .discrete_planner import (
    Abstraction,
    CounterexampleStore,
    DiscretePlan,
    PlanSegment,
    abstract,
    add_counterexample,
    bmc_next_candidate,
    word_of,
)
from .belief_rrt import (
    RrtNode,
    RrtParams,
    SegmentResult,
    SegmentTask,
    rrt_drain,
    rrt_extend,
    rrt_select,
    solve_segment,
)
from .synthesis import (
    InternalConsistencyError,
    Problem,
    SolutionTrajectory,
    SynthesisResult,
    solve,
    trajectory_query,
)
from .tracking import LqrGains, lqr_gains, simulate, track_step

__version__ = "0.1.0"
