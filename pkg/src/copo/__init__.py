"""Closed-loop predict-and-optimize toolkit for day-ahead unit commitment.

The package builds and solves the day-ahead commitment and hindsight
dispatch models, trains cost-oriented affine predictors for RES availability
and reserve requirements by column-and-constraint generation on the bilevel
risk problem, and evaluates the resulting prescriptive commitment against
open-loop, perfect-information, and two-stage stochastic baselines.
"""

from .baselines import (
    EvaluationRecord,
    UncertaintyScenarioSet,
    asymmetry_experiment,
    generate_scenarios,
    metric_ei,
    metric_loss,
    metric_voi,
    reduce_scenarios,
    run_method,
    run_open_loop_record,
    run_perfect,
    run_prescriptive_uc,
    solve_tsp,
    stats_metrics,
)
from .kkt import KktSystem, derive_kkt, solve_kkt_system
from .milp import (
    LinearModel,
    ModelBuilder,
    SolveResult,
    SolveStatus,
    export_lp_text,
    fix_binaries,
    solve,
)
from .operation import (
    CommitmentPlan,
    CostReport,
    DispatchOutcome,
    Penalties,
    actual_cost,
    build_ed,
    build_uc,
    run_open_loop,
)
from .predictors import (
    AffinePredictorPair,
    identity_pair,
    load_predictor,
    predict_res,
    predict_reserve,
    save_predictor,
)
from .scenarios import OperationScenario, load_scenarios, save_scenarios
from .system import (
    Branch,
    PowerSystem,
    RenewableUnit,
    ThermalUnit,
    build_sensitivities,
    load_system,
    rule_of_thumb_reserve,
    save_system,
)
from .training import (
    CcgState,
    TrainingConfig,
    build_master,
    solve_sp1,
    solve_sp2,
    train,
    verify_proposition1,
)
from .verification import run_verification

__version__ = "0.1.0"
