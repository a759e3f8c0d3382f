"""CSV export, standalone SVG plots, and the hatching-rate sweep.

Trajectory CSV format: header ``t,E,M,F,Ms,u`` (full model) or ``t,F,Ms,u``
(reduced); rows at a fixed 0.5-day sampling plus one row for every interior
control-segment boundary that does not already fall on the grid; floats at
10 significant digits; LF newlines.  Re-importing and re-exporting a file is
byte-for-byte idempotent.

Plots are hand-written standalone SVG (no plotting dependency): line series,
axes with ticks, a legend, and dashed horizontal marker levels for targets
and rate bounds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .integrator import Trajectory
from .params import derive_quantities, params_from_config
from .planner import ProblemSpec, plan_release
from .schedule import ControlSchedule

__all__ = [
    "export_trajectory_csv",
    "read_trajectory_csv",
    "sample_rows",
    "Series",
    "render_plot",
    "sweep",
]


def _fmt(x: float) -> str:
    return "%.10g" % x


def sample_rows(traj: Trajectory, u: ControlSchedule, step: float = 0.5) -> tuple[list[float], np.ndarray]:
    """Sampling times (fixed grid plus off-grid segment boundaries) and states."""
    t0, t1 = traj.t0, traj.t1
    n = math.ceil((t1 - t0) / step)
    times = [t0 + k * step for k in range(n)] + [t1]
    grid = set(times)
    extra = []
    for b in u.boundaries():
        if t0 < b < t1 and not any(abs(b - g) <= 1e-9 for g in grid):
            extra.append(b)
    times = sorted(set(times) | set(extra))
    return times, traj.sample(np.array(times))


def export_trajectory_csv(traj: Trajectory, u: ControlSchedule, path) -> None:
    """Write a trajectory (with its applied control) as CSV.

    The control column uses the schedule's right-continuous value at each
    sample time.
    """
    header = "t,E,M,F,Ms,u" if traj.ys.shape[1] == 4 else "t,F,Ms,u"
    times, states = sample_rows(traj, u)
    lines = [header]
    for t, row in zip(times, states):
        cells = [_fmt(t)] + [_fmt(v) for v in row] + [_fmt(u.rate_at(t))]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a trajectory CSV back as (column names, value matrix)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return names, data


def rewrite_trajectory_csv(path_in, path_out) -> None:
    """Round-trip a CSV through parse/format (idempotence check helper)."""
    names, data = read_trajectory_csv(path_in)
    lines = [",".join(names)]
    for row in data:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path_out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# -- SVG plotting ------------------------------------------------------------


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    color: str = "#1f77b4"
    dash: str | None = None


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def render_plot(
    series: list[Series],
    path,
    title: str = "",
    xlabel: str = "t (days)",
    ylabel: str = "",
    markers: dict | None = None,
    width: int = 720,
    height: int = 440,
) -> None:
    """Write a standalone SVG line plot.

    ``markers`` maps label -> level for dashed horizontal reference lines
    (target population, rate bound).
    """
    if not series:
        raise ValueError("need at least one series")
    markers = markers or {}
    ml, mr, mt, mb = 72, 16, 34 if title else 16, 48
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series] + [[v] for v in markers.values()])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if y1 <= y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad if y0 != 0.0 else 0.0, y1 + pad
    if x1 <= x0:
        x1 = x0 + 1.0

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
            f"{escape(title)}</text>"
        )
    for tx in _ticks(x0, x1):
        px = X(tx)
        out.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" y2="{mt + ph + 5}" stroke="#333"/>')
        out.append(
            f'<text x="{px:.2f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y0, y1):
        py = Y(ty)
        out.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#333"/>')
        out.append(
            f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(ty)}</text>'
        )
        out.append(
            f'<line x1="{ml}" y1="{py:.2f}" x2="{ml + pw}" y2="{py:.2f}" '
            f'stroke="#ddd" stroke-width="0.5"/>'
        )
    out.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    if ylabel:
        out.append(
            f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>'
        )
    for i, (label, level) in enumerate(markers.items()):
        py = Y(level)
        out.append(
            f'<line x1="{ml}" y1="{py:.2f}" x2="{ml + pw}" y2="{py:.2f}" '
            f'stroke="#555" stroke-dasharray="6 4"/>'
        )
        out.append(
            f'<text x="{ml + pw - 4}" y="{py - 4:.2f}" text-anchor="end" fill="#555">'
            f"{escape(label)}={_fmt(level)}</text>"
        )
    for i, s in enumerate(series):
        color = s.color if s.color else _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(s.x, s.y))
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'
        )
        lx, ly = ml + pw - 150, mt + 16 + 16 * i
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}"{dash} stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


# -- hatching-rate sweep ------------------------------------------------------


def sweep(
    config: dict,
    nu_E_grid,
    T: float,
    U_bar: float,
    eps_frac: float = 0.25,
    methods: tuple = ("plan",),
    grid: int = 300,
    workers: int = 1,
) -> list[dict]:
    """Release totals across a hatching-rate grid, one row per nu_E.

    Each row rebuilds the calibrated parameter set with its nu_E (the anchor
    census is nu_E-invariant, the egg capacity is not).  ``methods`` selects
    which solvers fill the row: "plan" (bisection), "direct-reduced",
    "direct-full".  Per-row failures are recorded in the row, not raised.
    """
    lo, hi = 0.005, 0.25
    nu_E_grid = [float(v) for v in nu_E_grid]
    for v in nu_E_grid:
        if not lo <= v <= hi:
            raise ValueError(f"nu_E={v} outside the plausible interval [{lo}, {hi}]")

    def one(nu_E: float) -> dict:
        row: dict = {"nu_E": nu_E}
        try:
            p = params_from_config({**config, "nu_E": nu_E})
            d = derive_quantities(p)
            spec = ProblemSpec(T=T, U_bar=U_bar, epsilon=eps_frac * d.F_bar)
        except Exception as exc:  # noqa: BLE001 - per-row fault isolation
            row["error"] = f"{type(exc).__name__}: {exc}"
            return row
        if "plan" in methods:
            try:
                res = plan_release(p, spec)
                row["J_plan"] = res.J
                row["T_opt_plan"] = res.active_duration
            except Exception as exc:  # noqa: BLE001
                row["error_plan"] = f"{type(exc).__name__}: {exc}"
        for tag, model in (("direct_reduced", "reduced"), ("direct_full", "full")):
            if f"direct-{model}" not in methods:
                continue
            try:
                from .optimize import solve_direct, adjoint_for_result, verify_switching

                res = solve_direct(
                    p,
                    ProblemSpec(T=T, U_bar=U_bar, epsilon=eps_frac * d.F_bar, model=model),
                    grid=grid,
                )
                row[f"J_{tag}"] = res.J
                rep = verify_switching(res, adjoint_for_result(p, res))
                row[f"T_opt_{tag}"] = T - rep.t0
            except Exception as exc:  # noqa: BLE001
                row[f"error_{tag}"] = f"{type(exc).__name__}: {exc}"
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, nu_E_grid))
    return [one(v) for v in nu_E_grid]


def sweep_csv(rows: list[dict], path) -> None:
    """Write sweep rows as CSV with a stable column order."""
    cols: list[str] = ["nu_E"]
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for key in cols:
            v = row.get(key, "")
            cells.append(_fmt(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
