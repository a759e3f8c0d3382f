"""Sterile-insect-technique population dynamics and optimal release planning.

The package models an Aedes-type mosquito population under sterile-male
releases (a four-compartment system and its two-compartment quasi-static
reduction), analyzes equilibria and the critical release rate, and computes
release schedules that hit a terminal female target with as few sterile
males as possible.  Two independent routes to the optimum are provided: a
bisection planner built on the closed-loop singular feedback law, and a
direct adjoint projected-gradient optimizer (which also handles quadratic
and budget-constrained variants).
"""

__version__ = "0.1.0"

from .adjoint import AdjointTrajectory, adjoint_solve, gradient_terminal
from .errors import (
    ConfigError,
    DomainError,
    HypothesisViolation,
    Infeasible,
    InfeasibleHorizon,
    InvariantBreach,
    NoMinimum,
    NotReached,
    OutOfRange,
    ShiftOverflow,
    StepSizeUnderflow,
    StructureMismatch,
    StructureViolation,
)
from .feedback import ClosedLoopRun, integrate_closed_loop, singular_rate
from .integrator import Trajectory, first_sign_change, integrate, integrate_ode, locate_event
from .model import (
    Equilibrium,
    Partials,
    equilibria_and_stability,
    f_partials,
    f_value,
    jacobian_full,
    jacobian_reduced,
    phi_threshold,
    rhs_full,
    rhs_reduced,
)
from .optimize import (
    OptimizationResult,
    SwitchingReport,
    adjoint_for_result,
    solve_budget_dual,
    solve_direct,
    verify_switching,
)
from .params import (
    DerivedQuantities,
    LambdaForm,
    Params,
    calibrate_capacity,
    derive_quantities,
    load_params,
    params_from_config,
    parse_config,
    table_defaults,
)
from .planner import (
    PlanResult,
    ProblemSpec,
    assemble_control,
    minimal_time,
    plan_full_model,
    plan_release,
    psi,
)
from .reporting import Series, export_trajectory_csv, read_trajectory_csv, render_plot, sweep
from .schedule import ControlSchedule, Segment
