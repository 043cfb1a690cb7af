"""Adaptive shared control via LQ differential games.

Solve two-player feedback Nash equilibria, estimate a partner's feedback law
online, identify their cost function, and re-optimize the automation against
a global objective; ships an offline scenario runner and a real-time
human-in-the-loop service.
"""

from .design import (
    AdaptOutcome,
    AdaptPolicy,
    DesignBounds,
    DesignProblem,
    DesignResult,
    adapt_step,
    design_automation,
)
from .errors import (
    ConfigError,
    DimensionError,
    InfeasibleError,
    LqSharedError,
    NoConvergenceError,
    NonFiniteError,
    NoStableCandidateError,
    NotStabilizableError,
    UnstableError,
)
from .games import (
    AUTOMATION,
    HUMAN,
    CostParams,
    FeedbackGain,
    GameSystem,
    GlobalObjective,
    RiccatiSolution,
    SimTrace,
    SolverOptions,
    closed_loop_matrix,
    coupled_riccati_residual,
    evaluate_global_cost,
    simulate,
    solve_coupled_riccati,
    stability_margins,
)
from .inverse import (
    IdentificationDiagnostics,
    ResidualSystem,
    ThetaVector,
    build_residual_system,
    identification_confidence,
    identify_cost,
)
from .rls import RlsState, current_gain, rls_init, rls_update
from .scenario import (
    Excitation,
    HumanPhase,
    ReferenceProfile,
    ScenarioConfig,
    ScenarioEngine,
    TimeSeries,
    design_offline,
    gain_error,
    paper_system,
    rmse_manipulator,
    run_scenario,
    synthetic_human,
)

__version__ = "0.1.0"
