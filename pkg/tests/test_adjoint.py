"""Adjoint solves and terminal-state gradients."""

import math

import numpy as np
import pytest

from sitopt.adjoint import adjoint_solve, gradient_terminal
from sitopt.integrator import integrate
from sitopt.model import f_partials
from sitopt.params import derive_quantities
from sitopt.schedule import ControlSchedule

T = 50.0


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(123)


def _forward(model, p, schedule, rtol=1e-9):
    d = derive_quantities(p)
    s0 = (d.F_bar, 0.0) if model == "reduced" else (d.E_bar, d.M_bar, d.F_bar, 0.0)
    return integrate(model, p, s0, schedule, rtol=rtol)


def test_reduced_Q_closed_form_at_equilibrium(p_default, d_default):
    # with u = 0 the forward state is frozen at equilibrium and Q solves a
    # scalar linear ODE whose rate is the female self-derivative there
    fw = _forward("reduced", p_default, ControlSchedule.off(T))
    adj = adjoint_solve("reduced", p_default, fw)
    rate = f_partials(d_default.F_bar, 0.0, p_default).df_dF
    assert math.isclose(rate, p_default.delta_F * (1.0 / d_default.R0 - 1.0), rel_tol=1e-12)
    for t in (0.0, 17.3, 42.0, T):
        q = float(adj.component("Q", t))
        assert math.isclose(q, math.exp(rate * (T - t)), rel_tol=1e-9)


def test_reduced_terminal_conditions_and_R_sign(p_default):
    fw = _forward("reduced", p_default, ControlSchedule.constant(2000.0, T))
    adj = adjoint_solve("reduced", p_default, fw)
    assert adj.component("Q", T) == 1.0
    assert adj.component("R", T) == 0.0
    grid = np.linspace(0.0, T - 1e-6, 200)
    R = adj.component("R", grid)
    assert np.all(R < 0.0)
    Q = adj.component("Q", grid)
    assert np.all(Q > 0.0)


def test_Q_within_growth_bounds(p_default):
    # |Q| can grow at most like exp of the largest female self-rate seen
    u = ControlSchedule.constant(3000.0, T)
    fw = _forward("reduced", p_default, u)
    adj = adjoint_solve("reduced", p_default, fw)
    rates = [abs(f_partials(max(F, 1e-9), Ms, p_default).df_dF) for F, Ms in fw.ys]
    mu = max(rates)
    grid = np.linspace(0.0, T, 101)
    Q = adj.component("Q", grid)
    assert np.all(Q <= math.exp(mu * T) * (1 + 1e-9))
    assert np.all(Q >= math.exp(-mu * T) * (1 - 1e-9))


def test_full_terminal_conditions_and_S_sign(p_default):
    fw = _forward("full", p_default, ControlSchedule.constant(2000.0, T))
    adj = adjoint_solve("full", p_default, fw)
    end = adj.sample(T)
    np.testing.assert_allclose(end[:4], [0.0, 0.0, 1.0, 0.0], atol=1e-14)
    near = np.linspace(0.5 * T, T - 1e-6, 50)
    assert np.all(adj.component("S", near) < 0.0)


@pytest.mark.parametrize("model", ["reduced", "full"])
def test_gradient_matches_finite_differences(model, p_default, d_default, rng):
    # criterion-level oracle: 20 random admissible controls per model
    N = 20
    edges = np.linspace(0.0, T, N + 1)
    d = d_default
    s0 = (d.F_bar, 0.0) if model == "reduced" else (d.E_bar, d.M_bar, d.F_bar, 0.0)
    f_idx = 0 if model == "reduced" else 2
    h = 1e-3 * 5000.0
    worst = 0.0
    for trial in range(20):
        vals = rng.uniform(h, 5000.0 - h, N)
        g = gradient_terminal(model, p_default, edges, vals, rtol=1e-11)
        assert np.all(g <= 0.0)
        for i in rng.choice(N, size=2, replace=False):
            vp, vm = vals.copy(), vals.copy()
            vp[i] += h
            vm[i] -= h
            Fp = float(
                integrate(model, p_default, s0,
                          ControlSchedule.piecewise_constant(edges, vp), rtol=1e-11).sample(T)[f_idx]
            )
            Fm = float(
                integrate(model, p_default, s0,
                          ControlSchedule.piecewise_constant(edges, vm), rtol=1e-11).sample(T)[f_idx]
            )
            fd = (Fp - Fm) / (2.0 * h)
            worst = max(worst, abs(fd - g[i]) / abs(fd))
    assert worst <= 1e-4, worst


def test_gradient_strictly_negative_at_zero_control(p_default):
    edges = np.linspace(0.0, T, 11)
    g = gradient_terminal("reduced", p_default, edges, np.zeros(10))
    assert np.all(g < 0.0)


def test_gradient_cells_match_quadrature(p_default):
    # the carried cumulative column equals direct quadrature of R
    fw = _forward("reduced", p_default, ControlSchedule.constant(1500.0, T))
    adj = adjoint_solve("reduced", p_default, fw)
    edges = np.linspace(0.0, T, 26)
    cells = adj.gradient_cells(edges)
    for i in (0, 12, 24):
        ts = np.linspace(edges[i], edges[i + 1], 2001)
        quad = np.trapezoid(adj.component("R", ts), ts)
        assert math.isclose(cells[i], quad, rel_tol=1e-6, abs_tol=1e-12)
