"""Deterministic simulator and controllers for closed-loop sentiment
dynamics under a recommender system.

The library covers network construction, the affine sentiment update,
engagement/mitigation costs, model-free and receding-horizon controllers,
scored-content selection, behavioral metrics, and a penalty-sweep harness
with CSV/JSON/figure outputs.
"""

from .content import (
    ContentItem,
    Corpus,
    CorpusFormatError,
    NoEligibleContentError,
    aggregate_score,
    eligible,
    ingest_corpus,
    schedule_appearances,
    select_discrete,
    synthesize_corpus,
    write_corpus,
)
from .control import (
    MpcConfig,
    MpcSolver,
    QpNonConvergedError,
    SteadyState,
    SteadyStateError,
    mb_steady_state,
    mf_control,
    mf_steady_state,
    mpc_control,
    qp_solve_box,
)
from .costs import (
    ContentWindowError,
    CostParams,
    engagement_cost,
    mitigation_cost,
    novelty_factor,
)
from .dynamics import (
    PowerIterationError,
    SystemMatrices,
    Trajectory,
    build_matrices,
    h_matrix_min_eigenvalue,
    spectral_radius_check,
    step,
    write_trajectory_csv,
)
from .harness import (
    ConfigError,
    DEFAULT_SEEDS,
    RunResult,
    ScenarioConfig,
    ScenarioRunError,
    SweepReport,
    load_config,
    run_scenario,
    run_sweep,
    validate_scenario,
)
from .metrics import (
    ParetoPoint,
    RunMetrics,
    UndefinedMetricError,
    engagement_cost_per_user,
    misinformation_ratio,
    pareto_points,
    sentiment_shift,
)
from .network import (
    Network,
    NetworkGenerationError,
    ValidationReport,
    generate_network_a,
    load_network,
    network_b,
    save_network,
    validate_network,
)

__version__ = "0.1.0"
