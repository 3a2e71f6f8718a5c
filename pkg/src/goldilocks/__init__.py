"""Antiviral dosing on a target-cell-limited infection model.

The Goldilocks dose is the smallest repeated dose that leaves the
susceptible-cell count just above the critical level U* = 1/R when the
treatment stops, which maximises the final susceptible count.
"""

__version__ = "0.1.0"

from .analysis import (
    AnalysisDomainError,
    FinalSizeQuery,
    OmegaDomain,
    VPeak,
    auc_trapezoid,
    auc_v,
    final_size,
    level_function,
    level_grid,
    lyapunov_j,
    lyapunov_rate,
    peak_of_v,
    property1_probe,
    u_infinity,
    u_infinity_maximizer,
)
from .integrator import DoseSchedule, IntegrationError, Trajectory, simulate, simulate_uncontrolled, terminal_state
from .lambertw import LambertDomainError, lambert_w0
from .model import (
    PATIENT_A_X0,
    HostState,
    ModelParams,
    PkPdParams,
    ReproductionNumber,
    eta,
    patient_a,
    patient_a_pkpd,
    reproduction_number,
    reproduction_number_t,
)
from .planner import (
    InvalidPlanError,
    LateTreatmentWarning,
    NoDoseFoundError,
    QssThresholds,
    Scenario,
    ScenarioVerdict,
    SingleIntervalPlan,
    build_schedule,
    classify,
    detect_qss,
    goldilocks_dose,
    run_plan,
    two_step_plan,
    upper_bound_check,
)
