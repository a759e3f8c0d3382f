#!/usr/bin/env python3
"""Steady states, stability, and the critical release rate.

Below the critical constant rate U* the controlled system keeps a pair of
positive equilibria and a constant release stalls at the upper one; above
U* only extinction remains and the population collapses.  This script maps
that bifurcation numerically.
"""

from pathlib import Path

import numpy as np

from sitopt import (
    ControlSchedule,
    Series,
    derive_quantities,
    equilibria_and_stability,
    integrate,
    minimal_time,
    render_plot,
    table_defaults,
)
from sitopt.errors import NotReached

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

p = table_defaults()
d = derive_quantities(p)
print(f"U* = {d.Ustar:.1f} males/day\n")

print("steady states vs constant release rate:")
for frac in (0.0, 0.5, 0.9, 1.01, 1.2):
    u = frac * d.Ustar
    eqs = equilibria_and_stability(p, u)
    females = [f"{eq.state[2]:.0f} ({eq.classification})" for eq in eqs]
    print(f"  u = {u:8.0f} ({frac:4.2f} U*): F at equilibria -> {', '.join(females)}")

print("\ntime for a constant release to push females to a quarter of equilibrium:")
eps = d.F_bar / 4.0
for rate in (4000.0, 8000.0, 12000.0, 16000.0):
    try:
        t = minimal_time(p, rate, eps)
        print(f"  u = {rate:6.0f}: {t:7.1f} days")
    except NotReached:
        print(f"  u = {rate:6.0f}: never (trajectory stalls above the target)")

# collapse above the threshold vs stall below it
T = 400.0
grid = np.linspace(0.0, T, 1601)
curves = []
for label, rate, color in (
    ("0.5 U*", 0.5 * d.Ustar, "#2ca02c"),
    ("1.05 U*", 1.05 * d.Ustar, "#d62728"),
):
    traj = integrate("reduced", p, (d.F_bar, 0.0), ControlSchedule.constant(rate, T))
    curves.append(Series(label, grid, traj.sample(grid)[:, 0], color))
render_plot(curves, OUT / "critical_rate.svg",
            title="constant release below vs above the critical rate",
            ylabel="fertilized females")
print("\nwrote critical_rate.svg")
