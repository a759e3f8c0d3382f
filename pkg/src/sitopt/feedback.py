"""Singular-arc feedback law and the closed-loop auxiliary runs.

Along a singular arc the release rate is an explicit state feedback,

    u(F, Ms) = ( df/dMs * df/dF + delta_s*Ms * d2f/dMs2 - f * d2f/dMsdF )
               / d2f/dMs2 ,

obtained by differentiating the vanishing switching function twice.  The
planner's inner object is the closed-loop run: start at the persistence
equilibrium, apply the feedback for a duration tau1, switch off, and record
the time tau2 at which the female population bottoms out and the level
F_min it reaches.  F_min is strictly decreasing in tau1, which is what makes
bisection on tau1 work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoMinimum
from .integrator import DEFAULT_RTOL, Trajectory, first_sign_change, integrate_ode
from .model import _partials_kernel, f_partials, f_value
from .params import Params, derive_quantities
from .schedule import ControlSchedule, Segment

__all__ = ["singular_rate", "ClosedLoopRun", "integrate_closed_loop"]

#: Sampling step (days) for storing the singular rate along an arc.
U_SAMPLE_DT = 0.01


def singular_rate(F: float, Ms: float, p: Params) -> float:
    """Release rate keeping the trajectory on the singular arc.

    Raises:
        DomainError: if F <= 0 (partials undefined there).
    """
    part = f_partials(F, Ms, p)
    return (
        part.df_dMs * part.df_dF + p.delta_s * Ms * part.d2f_dMs2 - part.f * part.d2f_dMsdF
    ) / part.d2f_dMs2


@dataclass(frozen=True)
class ClosedLoopRun:
    """One closed-loop experiment: feedback on (0, tau1), off afterwards.

    ``u_ts``/``u_rates`` sample the applied (clamped) singular rate on
    [0, tau1].  ``negative_rate`` records whether the raw feedback formula
    ever went below zero during evaluation (the value is clamped to 0 when it
    does); ``max_rate`` is the largest rate seen, for bound diagnostics.
    """

    tau1: float
    trajectory: Trajectory
    u_ts: np.ndarray
    u_rates: np.ndarray
    tau2: float
    F_min: float
    negative_rate: bool
    max_rate: float

    def released_total(self) -> float:
        """Integral of the applied rate over the feedback window."""
        return float(np.trapezoid(self.u_rates, self.u_ts))


def _feedback_rhs(p: Params, flags: dict):
    lf = derive_quantities(p).lambda_form
    mu, a, alpha, beta, gamma = lf.mu, lf.a, lf.alpha, lf.beta, lf.gamma
    delta_F, delta_s = p.delta_F, p.delta_s

    def rhs(t, y):
        F = float(y[0])
        Ms = float(y[1])
        if F <= 0.0:
            raise DomainError("closed-loop state reached F <= 0; feedback undefined")
        f, df_dF, df_dMs, d2f_dMs2, d2f_dMsdF = _partials_kernel(
            F, Ms, mu, a, alpha, beta, gamma, delta_F
        )
        u = (df_dMs * df_dF + delta_s * Ms * d2f_dMs2 - f * d2f_dMsdF) / d2f_dMs2
        if u < 0.0:
            flags["negative"] = True
            u = 0.0
        elif u > flags["max_rate"]:
            flags["max_rate"] = u
        return np.array([f, u - delta_s * Ms])

    return rhs


def _off_rhs(p: Params):
    def rhs(t, y):
        return np.array([f_value(float(y[0]), float(y[1]), p), -p.delta_s * float(y[1])])

    return rhs


def integrate_closed_loop(
    p: Params,
    tau1: float,
    t_cap: float | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float | None = None,
) -> ClosedLoopRun:
    """Run the auxiliary closed-loop system from the persistence equilibrium.

    Feedback is applied on (0, tau1) and switched off afterwards; tau2 is the
    first time the female derivative turns from negative to positive, located
    by event detection on the off leg.  If no rebound occurs by ``t_cap`` the
    cap is doubled, up to 64 times the original, before giving up.

    Raises:
        NoMinimum: female population still declining at the extended cap.
    """
    if tau1 < 0.0:
        raise DomainError(f"tau1 must be >= 0, got {tau1!r}")
    d = derive_quantities(p)
    f_bar = d.F_bar
    if atol is None:
        atol = 1e-12 * f_bar
    if t_cap is None:
        t_cap = max(4.0 * tau1, tau1 + 200.0, 50.0)
    if t_cap < tau1:
        raise ValueError(f"t_cap={t_cap} must be >= tau1={tau1}")
    y0 = np.array([f_bar, 0.0])

    if tau1 == 0.0:
        # No release ever: the system sits at equilibrium.
        horizon = min(t_cap, 10.0)
        ts, ys, dense, _ = integrate_ode(_off_rhs(p), (0.0, horizon), y0, rtol=rtol, atol=atol)
        traj = Trajectory("reduced", ts, ys, dense, schedule=ControlSchedule.off(horizon))
        return ClosedLoopRun(
            tau1=0.0,
            trajectory=traj,
            u_ts=np.array([0.0]),
            u_rates=np.array([0.0]),
            tau2=0.0,
            F_min=f_bar,
            negative_rate=False,
            max_rate=0.0,
        )

    flags = {"negative": False, "max_rate": 0.0}
    ts1, ys1, dense1, _ = integrate_ode(
        _feedback_rhs(p, flags), (0.0, tau1), y0, rtol=rtol, atol=atol
    )
    leg1 = Trajectory("reduced", ts1, ys1, dense1)

    # Off leg, chunked with geometric cap extension until the rebound shows.
    off = _off_rhs(p)
    cap0 = t_cap
    cap = t_cap
    pieces_ts = [ts1]
    pieces_ys = [ys1]
    pieces_dense = [dense1]
    t_start = tau1
    y_start = ys1[-1]
    event = None
    g = lambda y: f_value(float(y[0]), float(y[1]), p)
    while True:
        ts2, ys2, dense2, _ = integrate_ode(off, (t_start, cap), y_start, rtol=rtol, atol=atol)
        chunk = Trajectory("reduced", ts2, ys2, dense2)
        event = first_sign_change(chunk, g, direction=+1, g_goal=1e-10 * f_bar)
        pieces_ts.append(ts2[1:])
        pieces_ys.append(ys2[1:])
        pieces_dense.append(dense2)
        if event is not None:
            break
        if cap >= 64.0 * cap0:
            raise NoMinimum(
                f"no female rebound by t={cap:.6g} (tau1={tau1:.6g}); parameters pathological"
            )
        t_start = float(ts2[-1])
        y_start = ys2[-1]
        cap *= 2.0

    tau2, y_min = event
    f_min = float(y_min[0])

    # Sample the applied singular rate on [0, tau1] for export and quadrature.
    n = max(int(math.ceil(tau1 / U_SAMPLE_DT)), 1)
    u_ts = np.linspace(0.0, tau1, n + 1)
    states = leg1.sample(u_ts)
    u_rates = np.array(
        [max(singular_rate(float(F), float(Ms), p), 0.0) for F, Ms in states]
    )

    applied = ControlSchedule(
        (
            Segment(0.0, tau1, "sampled", ts=u_ts, rates=u_rates),
            Segment(tau1, float(pieces_ts[-1][-1]), "off"),
        ),
        float(pieces_ts[-1][-1]),
    )
    traj = Trajectory(
        "reduced",
        np.concatenate(pieces_ts),
        np.vstack(pieces_ys),
        np.concatenate(pieces_dense),
        schedule=applied,
    )
    return ClosedLoopRun(
        tau1=float(tau1),
        trajectory=traj,
        u_ts=u_ts,
        u_rates=u_rates,
        tau2=float(tau2),
        F_min=f_min,
        negative_rate=flags["negative"],
        max_rate=flags["max_rate"],
    )
