"""Population dynamics: right-hand sides, drift partials, equilibria.

Two models act on the same parameter set.

Reduced model, state (F, Ms):

    F'  = f(F, Ms)
    Ms' = u - delta_s * Ms

with the rational drift

    f(F, Ms) = nu*(1-nu)*beta_E^2*nu_E^2*F^2
               / [ A * ((1-nu)*nu_E*beta_E*F + delta_M*gamma_s*Ms*A) ]
               - delta_F*F,        A = beta_E*F/K + nu_E + delta_E.

Full model, state (E, M, F, Ms):

    E'  = beta_E*F*(1 - E/K) - (nu_E + delta_E)*E
    M'  = (1-nu)*nu_E*E - delta_M*M
    F'  = nu*nu_E*E * M/(M + gamma_s*Ms) - delta_F*F
    Ms' = u - delta_s*Ms

The reduced model is the quasi-static limit of the full one (aquatic phase
and fertile males at equilibrium); both share the same steady states.

Conventions at degenerate points: f(0, 0) = 0 by continuity (the factored
denominator is evaluated before dividing, so no 0/0 is formed for F >= 0,
Ms >= 0 except at the origin, where 0 is returned); the mating fraction
M/(M + gamma_s*Ms) is taken as 0 when M = Ms = 0 in the right-hand side, and
as its no-sterile limit 1 when linearizing around the extinction state of the
uncontrolled system (the classical instability direction lives on Ms = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import Params, derive_quantities

__all__ = [
    "f_value",
    "rhs_reduced",
    "rhs_full",
    "Partials",
    "f_partials",
    "phi_threshold",
    "jacobian_reduced",
    "jacobian_full",
    "Equilibrium",
    "equilibria_and_stability",
]


def f_value(F: float, Ms: float, p: Params) -> float:
    """Female drift f(F, Ms), in individuals per day."""
    if F <= 0.0:
        return 0.0
    A = p.beta_E * F / p.K + p.nu_E + p.delta_E
    den = A * ((1.0 - p.nu) * p.nu_E * p.beta_E * F + p.delta_M * p.gamma_s * Ms * A)
    num = p.nu * (1.0 - p.nu) * (p.beta_E * p.nu_E) ** 2 * F * F
    return num / den - p.delta_F * F


def rhs_reduced(s, u: float, p: Params) -> np.ndarray:
    """Time derivative of the reduced state (F, Ms) under release rate u."""
    F, Ms = float(s[0]), float(s[1])
    return np.array([f_value(F, Ms, p), u - p.delta_s * Ms])


def rhs_full(s, u: float, p: Params) -> np.ndarray:
    """Time derivative of the full state (E, M, F, Ms) under release rate u."""
    E, M, F, Ms = (float(v) for v in s)
    den = M + p.gamma_s * Ms
    mating = M / den if den > 0.0 else 0.0
    return np.array(
        [
            p.beta_E * F * (1.0 - E / p.K) - (p.nu_E + p.delta_E) * E,
            (1.0 - p.nu) * p.nu_E * E - p.delta_M * M,
            p.nu * p.nu_E * E * mating - p.delta_F * F,
            u - p.delta_s * Ms,
        ]
    )


@dataclass(frozen=True)
class Partials:
    """Value and partial derivatives of the female drift at one state."""

    f: float
    df_dF: float
    df_dMs: float
    d2f_dMs2: float
    d2f_dMsdF: float


def _partials_kernel(F, Ms, mu, a, alpha, beta, gamma, delta_F):
    """Drift value and partials from the rational-form constants.

    Hot-loop kernel: plain float arithmetic, no parameter-object lookups.
    Returns (f, df_dF, df_dMs, d2f_dMs2, d2f_dMsdF).
    """
    q = alpha * F * F + beta * F + gamma
    r = 2.0 * F + a + Ms * (2.0 * alpha * F + beta)
    lam = 1.0 / (F * F + a * F + Ms * q)
    mF2 = mu * F * F
    f = mF2 * lam - delta_F * F
    df_dF = 2.0 * mu * F * lam - mF2 * lam * lam * r - delta_F
    df_dMs = -mF2 * lam * lam * q
    d2f_dMs2 = 2.0 * mF2 * lam**3 * q * q
    d2f_dMsdF = (
        -mu * F * lam * lam * (2.0 * q + F * (2.0 * alpha * F + beta))
        + 2.0 * mF2 * lam**3 * r * q
    )
    return f, df_dF, df_dMs, d2f_dMs2, d2f_dMsdF


def f_partials(F: float, Ms: float, p: Params) -> Partials:
    """Closed-form drift partials via the rational parametrization.

    Requires F > 0; the sterile-male partial is nonpositive and the second
    sterile-male partial strictly positive there, which is what makes the
    singular feedback law well defined.

    Raises:
        DomainError: if F <= 0.
    """
    if F <= 0.0:
        raise DomainError(f"drift partials require F > 0, got F={F!r}")
    lf = derive_quantities(p).lambda_form
    vals = _partials_kernel(F, Ms, lf.mu, lf.a, lf.alpha, lf.beta, lf.gamma, p.delta_F)
    return Partials(*vals)


def phi_threshold(F: float, p: Params) -> float:
    """Sterile-male level separating female growth from decline.

    Returns the unique Ms >= 0 with f(F, Ms) = 0 for F strictly between 0 and
    the equilibrium female count; f(F, Ms) <= 0 exactly when Ms is at or above
    the returned level.  Outside (0, F_bar) the drift is already nonpositive
    for every Ms >= 0, so the threshold is 0.
    """
    if F < 0.0:
        raise DomainError(f"phi_threshold requires F >= 0, got {F!r}")
    d = derive_quantities(p)
    if F <= 0.0 or F >= d.F_bar:
        return 0.0
    lf = d.lambda_form
    return F * (d.F_bar - F) / (lf.alpha * F * F + lf.beta * F + lf.gamma)


def jacobian_reduced(s, p: Params) -> np.ndarray:
    """Jacobian of the reduced right-hand side at state (F, Ms)."""
    F, Ms = float(s[0]), float(s[1])
    part = f_partials(F, Ms, p)
    return np.array([[part.df_dF, part.df_dMs], [0.0, -p.delta_s]])


def jacobian_full(s, p: Params, extinction_limit: bool = False) -> np.ndarray:
    """Jacobian of the full right-hand side at state (E, M, F, Ms).

    ``extinction_limit`` selects the no-sterile limit of the mating fraction
    (value 1) when M = Ms = 0, which is the linearization relevant to the
    uncontrolled extinction state.
    """
    E, M, F, Ms = (float(v) for v in s)
    den = M + p.gamma_s * Ms
    if den > 0.0:
        mating = M / den
        dmate_dM = p.gamma_s * Ms / den**2
        dmate_dMs = -M * p.gamma_s / den**2
    else:
        mating = 1.0 if extinction_limit else 0.0
        dmate_dM = 0.0
        dmate_dMs = 0.0
    c = p.nu * p.nu_E
    return np.array(
        [
            [-p.beta_E * F / p.K - (p.nu_E + p.delta_E), 0.0, p.beta_E * (1.0 - E / p.K), 0.0],
            [(1.0 - p.nu) * p.nu_E, -p.delta_M, 0.0, 0.0],
            [c * mating, c * E * dmate_dM, -p.delta_F, c * E * dmate_dMs],
            [0.0, 0.0, 0.0, -p.delta_s],
        ]
    )


@dataclass(frozen=True)
class Equilibrium:
    """One steady state of the full system under a constant release rate."""

    state: np.ndarray
    eigenvalues: np.ndarray
    classification: str  # "stable" | "unstable" | "marginal"


def _classify(eigenvalues: np.ndarray) -> str:
    scale = max(1e-300, float(np.max(np.abs(eigenvalues))))
    re = np.real(eigenvalues)
    if np.all(re < -1e-9 * scale):
        return "stable"
    if np.any(re > 1e-9 * scale):
        return "unstable"
    return "marginal"


def _quasi_static_EM(F: float, p: Params) -> tuple[float, float]:
    E = p.beta_E * F / (p.beta_E * F / p.K + p.nu_E + p.delta_E)
    M = (1.0 - p.nu) * p.nu_E * E / p.delta_M
    return E, M


def equilibria_and_stability(p: Params, u_const: float = 0.0) -> list[Equilibrium]:
    """Steady states of the full system under a constant release rate.

    For u_const = 0 this is extinction (unstable) plus persistence (stable).
    For u_const > 0 the nonzero candidates solve a quadratic in F; above the
    critical rate the discriminant is negative and only extinction remains,
    below it both roots are returned alongside extinction.  Eigenvalues come
    from the analytic Jacobian.
    """
    if u_const < 0.0:
        raise DomainError(f"constant release rate must be >= 0, got {u_const!r}")
    d = derive_quantities(p)
    ms = u_const / p.delta_s
    out = []

    ext = np.array([0.0, 0.0, 0.0, ms])
    eig = np.linalg.eigvals(jacobian_full(ext, p, extinction_limit=(u_const == 0.0)))
    out.append(Equilibrium(state=ext, eigenvalues=eig, classification=_classify(eig)))

    if u_const == 0.0:
        roots = [d.F_bar]
    else:
        # f(F, ms) = 0, F > 0  <=>  aq*F^2 + bq*F + cq = 0 in the rational form
        lf = d.lambda_form
        aq = p.delta_F * (1.0 + ms * lf.alpha)
        bq = p.delta_F * (lf.a + ms * lf.beta) - lf.mu
        cq = p.delta_F * ms * lf.gamma
        disc = bq * bq - 4.0 * aq * cq
        if disc < 0.0:
            roots = []
        else:
            sq = disc**0.5
            roots = sorted(r for r in ((-bq - sq) / (2 * aq), (-bq + sq) / (2 * aq)) if r > 0.0)
    for F in roots:
        E, M = _quasi_static_EM(F, p)
        state = np.array([E, M, F, ms])
        eig = np.linalg.eigvals(jacobian_full(state, p))
        out.append(Equilibrium(state=state, eigenvalues=eig, classification=_classify(eig)))
    return out
