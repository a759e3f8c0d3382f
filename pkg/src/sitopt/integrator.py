"""Adaptive explicit Runge-Kutta integration with dense output and events.

The driver is a Dormand-Prince 5(4) pair with a PI step-size controller.
Control discontinuities are handled by making every schedule-segment
boundary a mandatory mesh point, so no step straddles a switch; bang-bang
controls are the normal case, not an edge case.  Dense output is the pair's
own quartic interpolant (Shampine's coefficients), continuous with matching
derivatives across steps.  Events are located by scanning the accepted mesh
for sign changes and refining by bisection on the dense output.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantBreach, OutOfRange, StepSizeUnderflow
from .model import rhs_full, rhs_reduced
from .params import Params, derive_quantities
from .schedule import ControlSchedule

__all__ = [
    "Trajectory",
    "integrate",
    "integrate_ode",
    "locate_event",
    "first_sign_change",
    "reverse_time",
    "DEFAULT_RTOL",
]

DEFAULT_RTOL = 1e-9
_MIN_RTOL = 1e-12

# Dormand-Prince 5(4) tableau.
_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# 5th-order weights minus the embedded 4th-order weights.
_E1 = _B1 - 5179.0 / 57600.0
_E3 = _B3 - 7571.0 / 16695.0
_E4 = _B4 - 393.0 / 640.0
_E5 = _B5 + 92097.0 / 339200.0
_E6 = _B6 - 187.0 / 2100.0
_E7 = -1.0 / 40.0

# Quartic dense-output coefficients (Shampine 1986): the step interpolant is
#   y(t0 + theta*h) = y0 + h * K^T P [theta, theta^2, theta^3, theta^4]
# with stage matrix K.  Column 1 pins the left derivative, the row pattern
# pins the right state and derivative; both identities are unit-tested.
_P = np.array(
    [
        (1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835),
        (0.0, 0.0, 0.0, 0.0),
        (0.0, 4.023133379230305, -6.249321565289, 2.675424484351598),
        (0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504),
        (0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912),
        (0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455),
        (0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144),
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_PI_ALPHA = 0.7 / 5.0
_PI_BETA = 0.4 / 5.0
_MAX_STEPS = 5_000_000


def _initial_step(rhs, t0, y0, f0, direction_span, rtol, atol):
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 * direction_span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0
    dm = max(d1, d2)
    h1 = direction_span * 1e-3 if dm <= 1e-15 else (0.01 / dm) ** 0.2
    return max(min(100.0 * h0, h1, direction_span), 1e-10 * direction_span)


def integrate_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    y0,
    rtol: float = DEFAULT_RTOL,
    atol=1e-9,
    mandatory: Sequence[float] = (),
    max_step: float = math.inf,
    accept_cb: Callable[[float, np.ndarray], None] | None = None,
    first_step: float | None = None,
):
    """Integrate y' = rhs(t, y) forward over t_span.

    Returns (ts, ys, dense, h_next) where dense[i] holds the quartic
    interpolation coefficients of step i, shape (dim, 4), and h_next is the
    controller's step-size suggestion at exit (reusable by a continuation
    run).  Mandatory interior times are hit exactly; the step size never
    crosses them.

    Raises:
        StepSizeUnderflow: step below 1e-12 of the span.
        ValueError: rtol below 1e-12 (no meaningful accuracy gain).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"need t_span with t1 > t0, got {t_span!r}")
    if rtol < _MIN_RTOL:
        raise ValueError(f"rtol must be >= {_MIN_RTOL}, got {rtol}")
    y0 = np.asarray(y0, dtype=float).copy()
    atol = np.broadcast_to(np.asarray(atol, dtype=float), y0.shape).astype(float)
    span = t1 - t0
    h_floor = 1e-12 * span

    stops = sorted({t0, t1, *(float(m) for m in mandatory if t0 < m < t1)})

    ts = [t0]
    ys = [y0.copy()]
    dense: list[np.ndarray] = []

    t = t0
    y = y0
    f = rhs(t, y)
    h = first_step
    err_prev = 1.0
    nsteps = 0

    for leg_end in stops[1:]:
        if h is None:
            h = _initial_step(rhs, t, y, f, min(span, leg_end - t), rtol, atol)
        rejected = False
        while t < leg_end - 1e-14 * span:
            h = min(h, max_step, leg_end - t)
            if h < h_floor:
                raise StepSizeUnderflow(f"step size {h:.3e} underflowed at t={t:.6g}")
            nsteps += 1
            if nsteps > _MAX_STEPS:
                raise RuntimeError("step budget exhausted; dynamics likely pathological")

            k1 = f
            k2 = rhs(t + _C[0] * h, y + h * (_A21 * k1))
            k3 = rhs(t + _C[1] * h, y + h * (_A31 * k1 + _A32 * k2))
            k4 = rhs(t + _C[2] * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = rhs(t + _C[3] * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = rhs(t + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
            y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            t_new = t + h
            k7 = rhs(t_new, y_new)
            err_vec = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = math.sqrt(float(np.mean((err_vec / sc) ** 2)))

            if err <= 1.0:
                K = np.stack((k1, k2, k3, k4, k5, k6, k7))
                dense.append(h * (K.T @ _P))
                ts.append(t_new)
                ys.append(y_new)
                if accept_cb is not None:
                    accept_cb(t_new, y_new)
                t, y, f = t_new, y_new, k7
                err = max(err, 1e-10)
                factor = _SAFETY * err ** (-_PI_ALPHA) * err_prev**_PI_BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                if rejected:
                    factor = min(1.0, factor)
                h *= factor
                err_prev = err
                rejected = False
            else:
                rejected = True
                h *= min(1.0, max(_MIN_FACTOR, _SAFETY * err ** (-0.2)))
        # fresh derivative after a mandatory point: the RHS may jump there
        if leg_end < t1:
            f = rhs(t, y)

    return np.array(ts), np.vstack(ys), np.stack(dense), h


class Trajectory:
    """Dense-output solution of one model integration.

    Stores the accepted mesh, states, and per-step quartic interpolation
    coefficients; ``sample`` reproduces mesh states exactly and is C^1
    across steps.
    """

    __slots__ = ("model", "ts", "ys", "dense", "schedule")

    def __init__(self, model: str, ts, ys, dense, schedule: ControlSchedule | None = None):
        self.model = model
        self.ts = ts
        self.ys = ys
        self.dense = dense
        self.schedule = schedule

    @property
    def t0(self) -> float:
        return float(self.ts[0])

    @property
    def t1(self) -> float:
        return float(self.ts[-1])

    def sample(self, t):
        """State at time t (scalar or array), via the quartic interpolant.

        Raises:
            OutOfRange: t outside [t0, t1] beyond roundoff slack.
        """
        if isinstance(t, float) or isinstance(t, int):
            return self._sample_scalar(float(t))
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._sample_scalar(float(t_arr))
        span = self.t1 - self.t0
        slack = 1e-9 * max(span, 1.0)
        if np.any(t_arr < self.t0 - slack) or np.any(t_arr > self.t1 + slack):
            raise OutOfRange(f"sample time outside [{self.t0}, {self.t1}]")
        tc = np.clip(t_arr, self.t0, self.t1)
        idx = np.clip(np.searchsorted(self.ts, tc, side="right") - 1, 0, len(self.ts) - 2)
        h = self.ts[idx + 1] - self.ts[idx]
        theta = (tc - self.ts[idx]) / h
        powers = theta[:, None] ** np.arange(1, 5)
        out = self.ys[idx] + np.einsum("mdk,mk->md", self.dense[idx], powers)
        exact = theta == 1.0  # mesh right-endpoints reproduce stored states
        if np.any(exact):
            out[exact] = self.ys[idx[exact] + 1]
        return out

    def _sample_scalar(self, t: float) -> np.ndarray:
        ts = self.ts
        span = self.t1 - self.t0
        slack = 1e-9 * max(span, 1.0)
        if t < self.t0 - slack or t > self.t1 + slack:
            raise OutOfRange(f"sample time outside [{self.t0}, {self.t1}]")
        t = min(max(t, self.t0), self.t1)
        idx = min(max(int(np.searchsorted(ts, t, side="right")) - 1, 0), len(ts) - 2)
        return self._eval_step(idx, t)

    def _eval_step(self, idx: int, t: float) -> np.ndarray:
        ts = self.ts
        theta = (t - ts[idx]) / (ts[idx + 1] - ts[idx])
        if theta == 1.0:
            return self.ys[idx + 1].copy()
        c = self.dense[idx]
        acc = c[:, 3]
        for k in (2, 1, 0):
            acc = acc * theta + c[:, k]
        return self.ys[idx] + theta * acc

    def cursor_sampler(self):
        """Scalar sampler optimized for monotone access patterns.

        Keeps the last step index as a cursor and walks it instead of
        bisecting the whole mesh; correct for any access order, fast when
        consecutive queries are nearby (as in a backward adjoint sweep).
        """
        ts = self.ts
        n = len(ts) - 2
        state = {"idx": n}

        def sample(t: float) -> np.ndarray:
            t = min(max(t, self.t0), self.t1)
            i = state["idx"]
            while i > 0 and t < ts[i]:
                i -= 1
            while i < n and t >= ts[i + 1]:
                i += 1
            state["idx"] = i
            return self._eval_step(i, t)

        return sample


def reverse_time(traj: Trajectory, pivot: float) -> Trajectory:
    """Trajectory re-parametrized as t -> pivot - t (for backward solves)."""
    ts = pivot - traj.ts[::-1]
    ys = traj.ys[::-1]
    d = traj.dense  # shape (n, dim, 4), coefficients in the forward theta
    d1, d2, d3, d4 = d[..., 0], d[..., 1], d[..., 2], d[..., 3]
    flipped = np.stack(
        (
            -(d1 + 2.0 * d2 + 3.0 * d3 + 4.0 * d4),
            d2 + 3.0 * d3 + 6.0 * d4,
            -(d3 + 4.0 * d4),
            d4,
        ),
        axis=-1,
    )[::-1]
    return Trajectory(traj.model, ts, ys, flipped, schedule=None)


def _invariant_guard(model: str, p: Params):
    d = derive_quantities(p)
    if model == "reduced":
        upper = np.array([d.F_bar, math.inf])
        scale = np.array([d.F_bar, d.F_bar])
    else:
        upper = np.array([d.E_bar, d.M_bar, d.F_bar, math.inf])
        scale = np.array([d.E_bar, d.M_bar, d.F_bar, d.F_bar])
    slack = 1e-6 * scale

    def check(t, y):
        if np.any(y < -slack) or np.any(y > upper + slack):
            raise InvariantBreach(
                f"state {np.array2string(y, precision=6)} left the invariant box at t={t:.6g}"
            )

    return check


def _model_rhs(model: str, p: Params, segment) -> Callable[[float, np.ndarray], np.ndarray]:
    if segment.kind == "sampled":
        u_of_t = segment.value_at
    else:
        rate = segment.rate

        def u_of_t(t, _r=rate):
            return _r

    if model == "reduced":
        return lambda t, y: rhs_reduced(y, u_of_t(t), p)
    return lambda t, y: rhs_full(y, u_of_t(t), p)


def integrate(
    model: str,
    p: Params,
    s0,
    u: ControlSchedule,
    t_span: tuple[float, float] | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float | None = None,
    max_step: float = math.inf,
) -> Trajectory:
    """Integrate the reduced or full model under a release schedule.

    Every schedule boundary inside the span becomes a mandatory mesh point.
    Accepted states are checked against the model's forward-invariant box
    (slack 1e-6 of the equilibrium scale); leaving it raises InvariantBreach
    since non-negative controls cannot do that for exact dynamics.
    """
    if model not in ("reduced", "full"):
        raise ValueError(f"model must be 'reduced' or 'full', got {model!r}")
    if t_span is None:
        t_span = (0.0, u.horizon)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if atol is None:
        atol = 1e-12 * derive_quantities(p).F_bar
    guard = _invariant_guard(model, p)
    s0 = np.asarray(s0, dtype=float)
    guard(t0, s0)

    # Integrate segment by segment so each leg sees a single control law.
    cuts = sorted({t0, t1, *(b for b in u.boundaries() if t0 < b < t1)})
    ts_all: list[np.ndarray] = []
    ys_all: list[np.ndarray] = []
    dense_all: list[np.ndarray] = []
    y = s0
    h = None
    for a, b in zip(cuts, cuts[1:]):
        seg = u.segment_at(0.5 * (a + b))
        rhs = _model_rhs(model, p, seg)
        ts, ys, dense, h = integrate_ode(
            rhs, (a, b), y, rtol=rtol, atol=atol, max_step=max_step,
            accept_cb=guard, first_step=h,
        )
        drop_first = bool(ts_all)
        ts_all.append(ts[1:] if drop_first else ts)
        ys_all.append(ys[1:] if drop_first else ys)
        dense_all.append(dense)
        y = ys[-1]

    return Trajectory(
        model,
        np.concatenate(ts_all),
        np.vstack(ys_all),
        np.concatenate(dense_all),
        schedule=u,
    )


def first_sign_change(
    traj: Trajectory,
    g: Callable[[np.ndarray], float],
    t_from: float | None = None,
    direction: int = 0,
    g_tol: float = 0.0,
    g_goal: float | None = None,
):
    """First sign change of g along a trajectory, refined on dense output.

    ``direction`` restricts the crossing: +1 keeps only minus-to-plus, -1
    only plus-to-minus, 0 any.  Brackets whose g values are both within
    ``g_tol`` of zero are ignored (noise floor for event functions that are
    identically zero along stationary trajectories).  Returns (t, state) or
    None.
    """
    ts, ys = traj.ts, traj.ys
    start = 0 if t_from is None else int(np.searchsorted(ts, t_from, side="left"))
    gv = np.array([g(ys[i]) for i in range(start, len(ts))])
    span = max(traj.t1 - traj.t0, 1e-300)
    if g_goal is None:
        g_goal = 1e-10 * max(float(np.max(np.abs(gv))), 1e-300)

    for j in range(len(gv) - 1):
        a, b = gv[j], gv[j + 1]
        if max(abs(a), abs(b)) <= g_tol:
            continue
        if a == 0.0:
            continue
        if direction > 0 and a > 0.0:
            continue
        if direction < 0 and a < 0.0:
            continue
        if b == 0.0:
            i = start + j
            return float(ts[i + 1]), ys[i + 1].copy()
        if a * b < 0.0:
            i = start + j
            lo, hi = float(ts[i]), float(ts[i + 1])
            glo = a
            width_goal = 1e-10 * span
            gmid = a
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                gmid = g(traj.sample(mid))
                if glo * gmid <= 0.0:
                    hi = mid
                else:
                    lo, glo = mid, gmid
                if hi - lo <= width_goal and abs(gmid) <= g_goal:
                    break
                if hi - lo <= 1e-15 * max(abs(lo), 1.0):
                    break
            t_star = 0.5 * (lo + hi)
            return t_star, np.asarray(traj.sample(t_star))
    return None


def locate_event(
    model: str,
    p: Params,
    s0,
    u: ControlSchedule,
    g: Callable[[np.ndarray], float],
    t_span: tuple[float, float] | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float | None = None,
    direction: int = 0,
    g_tol: float = 0.0,
):
    """Integrate and return the first (t, state) where g changes sign, or None."""
    traj = integrate(model, p, s0, u, t_span=t_span, rtol=rtol, atol=atol)
    return first_sign_change(traj, g, direction=direction, g_tol=g_tol)
