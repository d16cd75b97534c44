"""Volume-based safety evaluation of automated-vehicle behavior models."""

from .models import (
    BehaviorModel,
    LinearCfParams,
    MobilParams,
    cf_accel,
    linear_cf_accel,
    load_fixture,
    load_model,
    milanes_accel,
    milanes_to_generalized,
    mobil_decide,
    save_model,
)
from .montecarlo import (
    McConfig,
    RiskBinning,
    RiskHistogram,
    cumulative_risk,
    mc_estimate,
    rank_models,
    sample_scenario,
)
from .polytope import (
    HPolytope,
    VolumeEstimate,
    build_omega_polytope,
    build_safe_polytope,
    cg_volume,
    chebyshev_center,
    dangerous_proportion_polytope,
    hit_and_run_step,
    project_equalities,
    sob_volume,
    ve_volume,
)
from .scenario import (
    AgentAction,
    AgentState,
    RolloutOutcome,
    ScenarioBounds,
    SystemState,
    TestingScenario,
    compute_ttc,
    detect_collisions,
    rollout,
    step_dynamics,
)

__version__ = "0.1.0"
