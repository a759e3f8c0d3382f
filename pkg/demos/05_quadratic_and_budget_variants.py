#!/usr/bin/env python3
"""Two variations on the release problem: quadratic cost and a fixed budget.

With a quadratic (L2) cost the optimal release is spread out: positive the
whole time, rising, then tapering to zero exactly at the horizon, with the
rate proportional to the adjoint component along the way.  The budget
problem turns the question around: given a fixed number of sterile males,
schedule them to leave as few wild females as possible; at budget = J* it
reproduces the terminal level of the minimal-release problem (duality).

Moderate grid so the whole script stays under five minutes.
"""

from pathlib import Path

import numpy as np

from sitopt import (
    ProblemSpec,
    Series,
    adjoint_for_result,
    derive_quantities,
    plan_release,
    render_plot,
    solve_budget_dual,
    table_defaults,
)
from sitopt.optimize import solve_direct

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
GRID = 80

p = table_defaults()
d = derive_quantities(p)
eps = d.F_bar / 4.0

print("quadratic-cost release (L2 objective) ...")
spec2 = ProblemSpec(T=200.0, U_bar=4000.0, epsilon=eps, objective="l2")
res2 = solve_direct(p, spec2, grid=GRID)
adj = adjoint_for_result(p, res2)
grid_t = np.linspace(0.0, 200.0, 801)
u_synth = np.maximum(0.0, -0.5 * res2.lam * adj.component("R", grid_t))
print(f"  F(T) = {res2.F_terminal:.2f}, released mass = {np.sum(res2.u) * res2.cell_width:.0f}")
print(f"  rate at the horizon (multiplier-synthesized): {abs(u_synth[-1]):.3g} males/day")
mids = 0.5 * (res2.edges[:-1] + res2.edges[1:])
render_plot(
    [
        Series("cells", mids, res2.u, "#1f77b4"),
        Series("-lambda R / 2", grid_t, u_synth, "#d62728", dash="5 3"),
    ],
    OUT / "l2_release.svg",
    title="quadratic-cost release: smooth, positive, zero at the horizon",
    ylabel="sterile males per day",
)
print("  wrote l2_release.svg")

print("\nbudget-constrained scheduling (duality round trip) ...")
plan = plan_release(p, ProblemSpec(T=200.0, U_bar=5000.0, epsilon=eps))
budget = plan.J
dual = solve_budget_dual(p, T=200.0, U_bar=5000.0, budget=budget, grid=GRID,
                         max_iter=300)
print(f"  budget = minimal-release total = {budget:.0f}")
print(f"  best achievable F(T) with that budget: {dual.F_terminal:.2f} "
      f"(target eps = {eps:.2f}, gap {abs(dual.F_terminal - eps) / eps:.3%})")
for frac in (0.5, 2.0):
    other = solve_budget_dual(p, T=200.0, U_bar=5000.0, budget=frac * budget,
                              grid=GRID, max_iter=300)
    print(f"  with {frac:.1f}x the budget: F(T) = {other.F_terminal:.2f}")
