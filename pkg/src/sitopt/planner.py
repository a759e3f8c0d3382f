"""Release planning by bisection on the singular-arc duration.

The minimum female level reached by a closed-loop run, psi(tau1), decreases
strictly in tau1, so the arc duration hitting a target level epsilon is found
by bisection.  The optimal open-loop schedule is then the closed-loop control
shifted so that the population minimum lands exactly on the horizon T:

    u*(t) = 0                       for t in (0, T - tau2)
    u*(t) = u_arc(t - (T - tau2))   afterwards,

which yields the off/singular/off switching structure with t0 = T - tau2 and
t1 = t0 + tau1.  The schedule only exists when the horizon exceeds both the
arc duration and the rebound time; shorter horizons are reported as
infeasible (the optimal control then carries a leading saturated arc that
this planner deliberately does not search for).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    HypothesisViolation,
    InfeasibleHorizon,
    NotReached,
    ShiftOverflow,
    StructureViolation,
)
from .feedback import ClosedLoopRun, integrate_closed_loop
from .integrator import DEFAULT_RTOL, first_sign_change, integrate
from .params import Params, derive_quantities
from .schedule import ControlSchedule, Segment

__all__ = [
    "ProblemSpec",
    "PlanResult",
    "psi",
    "plan_release",
    "assemble_control",
    "minimal_time",
    "plan_full_model",
]

_MODELS = ("reduced", "full")
_OBJECTIVES = ("l1", "l2", "budget")


@dataclass(frozen=True)
class ProblemSpec:
    """A release-optimization problem statement.

    T: horizon (days); U_bar: maximal release rate (individuals/day);
    epsilon: target female level at T (individuals); budget: total-release
    cap, only used by the budget objective.
    """

    T: float
    U_bar: float
    epsilon: float
    model: str = "reduced"
    objective: str = "l1"
    budget: float | None = None

    def __post_init__(self):
        if not self.T > 0.0:
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if not self.U_bar > 0.0:
            raise ValueError(f"rate bound U_bar must be positive, got {self.U_bar!r}")
        if not self.epsilon > 0.0:
            raise ValueError(f"target epsilon must be positive, got {self.epsilon!r}")
        if self.model not in _MODELS:
            raise ValueError(f"model must be one of {_MODELS}, got {self.model!r}")
        if self.objective not in _OBJECTIVES:
            raise ValueError(f"objective must be one of {_OBJECTIVES}, got {self.objective!r}")
        if self.objective == "budget" and (self.budget is None or self.budget < 0.0):
            raise ValueError("budget objective requires a nonnegative budget")


@dataclass(frozen=True)
class PlanResult:
    """Planned schedule with switch times and diagnostics."""

    schedule: ControlSchedule
    t0: float
    t1: float
    J: float
    F_terminal: float
    tau1: float
    tau2: float
    iterations: int
    residual: float
    negative_rate: bool
    bound_exceeded: bool

    @property
    def active_duration(self) -> float:
        """Length of the window from first release to the horizon, T - t0."""
        return self.schedule.horizon - self.t0


def psi(tau1: float, p: Params, rtol: float = DEFAULT_RTOL) -> float:
    """Minimum female level attained by the closed-loop run of duration tau1."""
    return integrate_closed_loop(p, tau1, rtol=rtol).F_min


def _check_problem(p: Params, spec: ProblemSpec) -> float:
    d = derive_quantities(p)
    if not 0.0 < spec.epsilon < d.F_bar:
        raise DomainError(
            f"epsilon must lie in (0, F_bar={d.F_bar:.6g}), got {spec.epsilon!r}"
        )
    if 2.0 * p.delta_s <= p.delta_F:
        raise HypothesisViolation(
            "singular-arc structure requires 2*delta_s > delta_F"
        )
    return d.F_bar


def plan_release(
    p: Params,
    spec: ProblemSpec,
    rtol: float = DEFAULT_RTOL,
    max_iterations: int = 60,
    psi_rtol: float = 1e-6,
) -> PlanResult:
    """Compute the minimal-release schedule hitting F(T) = epsilon.

    Bisection on tau1 in [0, T] maintains psi(tau_lo) > epsilon >= psi(tau_hi)
    and stops once |psi - epsilon| <= psi_rtol * epsilon (or after
    ``max_iterations`` halvings).  The released total J is the trapezoid
    quadrature of the sampled singular rate.

    Raises:
        InfeasibleHorizon: full-horizon feedback cannot reach epsilon, or the
            population minimum would land beyond T (horizon below the
            structure threshold).
        StructureViolation: the feedback formula went negative inside the
            arc, so the off/singular/off form does not apply.
    """
    if spec.model != "reduced":
        raise ValueError(
            "plan_release applies to the reduced model; use plan_full_model "
            "for a full-model schedule"
        )
    f_bar = _check_problem(p, spec)
    eps = spec.epsilon
    T = spec.T

    run_hi = integrate_closed_loop(p, T, t_cap=4.0 * T, rtol=rtol)
    evals = 1
    if run_hi.F_min > eps:
        raise InfeasibleHorizon(
            f"even tau1 = T = {T:.6g} days of feedback only reaches "
            f"F_min = {run_hi.F_min:.6g} > epsilon = {eps:.6g}; enlarge T"
        )

    lo, psi_lo = 0.0, f_bar
    hi, run_best = T, run_hi
    best_residual = abs(run_hi.F_min - eps)
    for _ in range(max_iterations):
        if best_residual <= psi_rtol * eps:
            break
        mid = 0.5 * (lo + hi)
        run = integrate_closed_loop(p, mid, t_cap=4.0 * T, rtol=rtol)
        evals += 1
        residual = abs(run.F_min - eps)
        if residual < best_residual:
            best_residual, run_best = residual, run
        if run.F_min < eps:
            hi = mid
        else:
            lo, psi_lo = mid, run.F_min
        assert psi_lo > eps, "bisection bracket invariant broken"

    run = run_best
    if run.negative_rate:
        raise StructureViolation(
            "singular feedback went negative inside the arc; the "
            "off/singular/off characterization does not hold here"
        )
    if run.tau2 > T:
        raise InfeasibleHorizon(
            f"population minimum occurs {run.tau2:.6g} days after release "
            f"start, beyond the horizon T = {T:.6g}; enlarge T"
        )

    schedule = assemble_control(run, T)
    t0 = T - run.tau2
    t1 = t0 + run.tau1
    traj = integrate("reduced", p, np.array([f_bar, 0.0]), schedule, rtol=rtol)
    f_terminal = float(traj.sample(T)[0])
    return PlanResult(
        schedule=schedule,
        t0=t0,
        t1=t1,
        J=run.released_total(),
        F_terminal=f_terminal,
        tau1=run.tau1,
        tau2=run.tau2,
        iterations=evals,
        residual=best_residual,
        negative_rate=run.negative_rate,
        bound_exceeded=run.max_rate > spec.U_bar,
    )


def assemble_control(run: ClosedLoopRun, T: float) -> ControlSchedule:
    """Time-shift a closed-loop arc so its population minimum lands at T.

    Raises:
        ShiftOverflow: the minimum time tau2 exceeds T.
    """
    if run.tau2 > T * (1.0 + 1e-12):
        raise ShiftOverflow(f"tau2 = {run.tau2:.6g} exceeds horizon T = {T:.6g}")
    t0 = max(T - run.tau2, 0.0)
    t1 = t0 + run.tau1
    segments: list[Segment] = []
    if run.tau1 <= 0.0:
        return ControlSchedule.off(T)
    if t0 > 1e-12 * T:
        segments.append(Segment(0.0, t0, "off"))
    else:
        t0 = 0.0
    segments.append(Segment(t0, t1, "sampled", ts=run.u_ts + t0, rates=run.u_rates))
    if t1 < T * (1.0 - 1e-12):
        segments.append(Segment(t1, T, "off"))
    return ControlSchedule(tuple(segments), T)


def minimal_time(
    p: Params,
    U_bar: float,
    epsilon: float,
    rtol: float = DEFAULT_RTOL,
) -> float:
    """Days a constant release at U_bar needs to push females down to epsilon.

    Integrates the reduced model from equilibrium under the constant rate and
    event-locates the crossing F = epsilon.  Above the critical rate the
    crossing always exists; below it the trajectory may stall at a positive
    equilibrium first.

    Raises:
        NotReached: no crossing within 100 female lifetimes of decay margin.
    """
    if U_bar <= 0.0:
        raise DomainError(f"U_bar must be positive, got {U_bar!r}")
    if epsilon <= 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    d = derive_quantities(p)
    if epsilon >= d.F_bar:
        return 0.0
    cap = 100.0 * math.log(d.F_bar / epsilon) / p.delta_F
    g = lambda y: float(y[0]) - epsilon
    state = np.array([d.F_bar, 0.0])
    t_prev = 0.0
    horizon = max(cap / 64.0, 1.0)
    while True:
        u = ControlSchedule.constant(U_bar, horizon)
        traj = integrate("reduced", p, state, u, t_span=(t_prev, horizon), rtol=rtol)
        hit = first_sign_change(traj, g, direction=-1, g_goal=1e-10 * d.F_bar)
        if hit is not None:
            return float(hit[0])
        if horizon >= cap:
            raise NotReached(
                f"constant release {U_bar:.6g}/day never reached F = {epsilon:.6g} "
                f"within {cap:.6g} days"
            )
        state = traj.ys[-1]
        t_prev = horizon
        horizon = min(2.0 * horizon, cap)


def plan_full_model(p: Params, spec: ProblemSpec, grid: int = 300, **kwargs):
    """Full-model schedule via the direct optimizer.

    The bisection planner is proven for the reduced dynamics only, so
    full-model planning delegates to the adjoint projected-gradient method;
    a warning records the change of machinery.
    """
    from .optimize import solve_direct  # local import: optimizer depends on planner

    warnings.warn(
        "bisection planning is specific to the reduced model; solving the "
        "full model with the direct adjoint optimizer instead",
        stacklevel=2,
    )
    full_spec = ProblemSpec(
        T=spec.T, U_bar=spec.U_bar, epsilon=spec.epsilon,
        model="full", objective=spec.objective, budget=spec.budget,
    )
    return solve_direct(p, full_spec, grid=grid, **kwargs)
