"""Adjoint systems and terminal-state gradients for both models.

The sensitivity of the terminal female count F(T) to the release rate is

    dF(T)[h] = integral h(t) * w(t) dt,

where w is the release-facing component of the adjoint state: R for the
reduced model (terminal condition (Q, R)(T) = (1, 0)), S for the full model
(terminal (P, Q, R, S)(T) = (0, 0, 1, 0)).  The adjoint ODE is the transposed
linearization integrated backward in time, with the frozen forward state read
from the forward trajectory's dense output.  A cumulative column

    W(t) = integral_t^T w(s) ds

is carried as an extra state so per-cell gradients of piecewise-constant
controls come out at solver accuracy instead of quadrature accuracy.
"""

from __future__ import annotations

import numpy as np

from .integrator import DEFAULT_RTOL, Trajectory, integrate, integrate_ode, reverse_time
from .model import _partials_kernel
from .params import Params, derive_quantities
from .schedule import ControlSchedule

__all__ = ["AdjointTrajectory", "adjoint_solve", "gradient_terminal"]

_COMPONENTS = {
    "reduced": ("Q", "R"),
    "full": ("P", "Q", "R", "S"),
}
_TERMINAL = {
    "reduced": np.array([1.0, 0.0]),
    "full": np.array([0.0, 0.0, 1.0, 0.0]),
}
_GRADIENT_COMPONENT = {"reduced": "R", "full": "S"}


class AdjointTrajectory:
    """Dense adjoint solution on [t0, T], plus the cumulative gradient column."""

    __slots__ = ("model", "traj", "names")

    def __init__(self, model: str, traj: Trajectory):
        self.model = model
        self.traj = traj
        self.names = _COMPONENTS[model] + ("W",)

    @property
    def t1(self) -> float:
        return self.traj.t1

    def sample(self, t) -> np.ndarray:
        """All adjoint components (and W) at time t."""
        return self.traj.sample(t)

    def component(self, name: str, t):
        idx = self.names.index(name)
        out = self.traj.sample(t)
        return out[..., idx]

    def gradient_cells(self, edges) -> np.ndarray:
        """Per-cell integrals of the release-facing component.

        Entry i is the Gateaux derivative of F(T) along a unit bump of the
        control on [edges[i], edges[i+1]].
        """
        w = self.component("W", np.asarray(edges, dtype=float))
        return w[:-1] - w[1:]


def _reduced_backward_rhs(p: Params, forward: Trajectory, T: float):
    lf = derive_quantities(p).lambda_form
    mu, a, alpha, beta, gamma = lf.mu, lf.a, lf.alpha, lf.beta, lf.gamma
    delta_F, delta_s = p.delta_F, p.delta_s
    frozen = forward.cursor_sampler()

    def rhs(s, z):
        y = frozen(T - s)
        F = max(float(y[0]), 1e-300)
        _, df_dF, df_dMs, _, _ = _partials_kernel(F, float(y[1]), mu, a, alpha, beta, gamma, delta_F)
        Q, R = float(z[0]), float(z[1])
        return np.array([df_dF * Q, df_dMs * Q - delta_s * R, R])

    return rhs


def _full_backward_rhs(p: Params, forward: Trajectory, T: float):
    # transposed-Jacobian product written out; entries as in jacobian_full
    beta_E, K, nu, nu_E = p.beta_E, p.K, p.nu, p.nu_E
    delta_E, delta_M, delta_F, delta_s, gs = p.delta_E, p.delta_M, p.delta_F, p.delta_s, p.gamma_s
    c = nu * nu_E
    frozen = forward.cursor_sampler()

    def rhs(s, z):
        y = frozen(T - s)
        E, M, F, Ms = float(y[0]), float(y[1]), float(y[2]), float(y[3])
        den = M + gs * Ms
        if den > 0.0:
            fF_E = c * M / den
            fF_M = c * E * gs * Ms / (den * den)
            fF_Ms = -c * E * M * gs / (den * den)
        else:
            fF_E = fF_M = fF_Ms = 0.0
        P, Q, R, S = float(z[0]), float(z[1]), float(z[2]), float(z[3])
        return np.array(
            [
                (-beta_E * F / K - (nu_E + delta_E)) * P + (1.0 - nu) * nu_E * Q + fF_E * R,
                -delta_M * Q + fF_M * R,
                beta_E * (1.0 - E / K) * P - delta_F * R,
                fF_Ms * R - delta_s * S,
                S,
            ]
        )

    return rhs


def adjoint_solve(
    model: str,
    p: Params,
    forward: Trajectory,
    rtol: float = DEFAULT_RTOL,
    atol: float = 1e-13,
) -> AdjointTrajectory:
    """Solve the transposed linearization backward along a forward trajectory.

    Backward tolerances match the forward ones by default; control-schedule
    boundaries of the forward run are kept as mandatory points since the
    frozen coefficients have kinks there.
    """
    if model not in _COMPONENTS:
        raise ValueError(f"model must be one of {tuple(_COMPONENTS)}, got {model!r}")
    T = forward.t1
    t0 = forward.t0
    rhs = (_reduced_backward_rhs if model == "reduced" else _full_backward_rhs)(p, forward, T)
    z0 = np.append(_TERMINAL[model], 0.0)
    mandatory = []
    if forward.schedule is not None:
        mandatory = [T - b for b in forward.schedule.boundaries() if t0 < b < T]
    ts, ys, dense, _ = integrate_ode(
        rhs, (0.0, T - t0), z0, rtol=rtol, atol=atol, mandatory=mandatory
    )
    back = Trajectory("adjoint_" + model, ts, ys, dense)
    return AdjointTrajectory(model, reverse_time(back, T))


def gradient_terminal(
    model: str,
    p: Params,
    edges,
    values,
    rtol: float = DEFAULT_RTOL,
) -> np.ndarray:
    """Gradient of F(T) w.r.t. a piecewise-constant control, one entry per cell."""
    edges = np.asarray(edges, dtype=float)
    d = derive_quantities(p)
    s0 = (
        np.array([d.F_bar, 0.0])
        if model == "reduced"
        else np.array([d.E_bar, d.M_bar, d.F_bar, 0.0])
    )
    u = ControlSchedule.piecewise_constant(edges, values)
    forward = integrate(model, p, s0, u, rtol=rtol)
    adj = adjoint_solve(model, p, forward, rtol=rtol)
    return adj.gradient_cells(edges)
