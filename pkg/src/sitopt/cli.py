"""Command-line interface: simulate, analyze equilibria, plan, optimize.

Exit codes: 0 on success, 1 when the requested problem is infeasible (a
diagnostic goes to stderr), 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    HypothesisViolation,
    Infeasible,
    InfeasibleHorizon,
    NoMinimum,
    NotReached,
    ShiftOverflow,
    StructureViolation,
)
from .integrator import integrate
from .model import equilibria_and_stability
from .params import derive_quantities, params_from_config, parse_config
from .planner import ProblemSpec, plan_release
from .reporting import Series, export_trajectory_csv, render_plot, sweep, sweep_csv
from .schedule import ControlSchedule

_INFEASIBLE = (Infeasible, InfeasibleHorizon, NotReached, NoMinimum, ShiftOverflow,
               StructureViolation)
_USAGE = (ConfigError, HypothesisViolation, ValueError)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sitopt",
        description="Sterile-male release simulation and optimal scheduling",
    )
    ap.add_argument("--version", action="version", version=f"sitopt {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="parameter file (key = value lines)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a parameter-file key (repeatable)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--plot", action="store_true", help="also write SVG plots")
    common.add_argument("--tol-rel", type=float, default=1e-9,
                        help="relative integration tolerance")

    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="integrate the model under a release schedule")
    sim.add_argument("--model", choices=["reduced", "full", "both"], default="reduced")
    sim.add_argument("--T", type=float, default=70.0, help="horizon (days)")
    sim.add_argument("--u", default="off",
                     help="release schedule: off | const:RATE | pulse:RATE:PERIOD:WIDTH")

    cmp_ = sub.add_parser("compare-models", parents=[common],
                          help="reduced vs full female trajectories under one schedule")
    cmp_.add_argument("--T", type=float, default=70.0)
    cmp_.add_argument("--u", default="const:15000")

    eq = sub.add_parser("equilibria", parents=[common],
                        help="derived quantities, steady states, eigenvalues")
    eq.add_argument("--u", default="off", help="constant rate: off | const:RATE")

    plan = sub.add_parser("plan", parents=[common],
                          help="minimal-release schedule by bisection on the singular arc")
    plan.add_argument("--T", type=float, default=200.0)
    plan.add_argument("--Ubar", type=float, default=5000.0)
    tgt = plan.add_mutually_exclusive_group()
    tgt.add_argument("--eps-frac", type=float, default=None,
                     help="target as a fraction of the equilibrium female count")
    tgt.add_argument("--eps", type=float, default=None, help="target female count")

    opt = sub.add_parser("optimize", parents=[common],
                         help="direct adjoint projected-gradient optimization")
    opt.add_argument("--model", choices=["reduced", "full"], default="reduced")
    opt.add_argument("--objective", choices=["l1", "l2"], default="l1")
    opt.add_argument("--T", type=float, default=200.0)
    opt.add_argument("--Ubar", type=float, default=5000.0)
    opt.add_argument("--grid", type=int, default=300)
    tgt = opt.add_mutually_exclusive_group()
    tgt.add_argument("--eps-frac", type=float, default=None)
    tgt.add_argument("--eps", type=float, default=None)

    dual = sub.add_parser("dual", parents=[common],
                          help="minimize the terminal female count under a release budget")
    dual.add_argument("--T", type=float, default=200.0)
    dual.add_argument("--Ubar", type=float, default=5000.0)
    dual.add_argument("--budget", type=float, required=True)
    dual.add_argument("--grid", type=int, default=300)

    sw = sub.add_parser("sweep", parents=[common],
                        help="release totals across a hatching-rate grid")
    sw.add_argument("--T", type=float, default=200.0)
    sw.add_argument("--Ubar", type=float, default=5000.0)
    sw.add_argument("--eps-frac", type=float, default=0.25)
    sw.add_argument("--grid", type=int, default=300)
    sw.add_argument("--nu-grid", default="0.005,0.01,0.02,0.03,0.05,0.1,0.15,0.25")
    sw.add_argument("--methods", default="plan",
                    help="comma list of plan, direct-reduced, direct-full")
    sw.add_argument("--workers", type=int, default=1)
    return ap


def _config_from_args(args) -> dict:
    config: dict = {}
    if args.params:
        with open(args.params, "r", encoding="utf-8") as fh:
            config = parse_config(fh.read())
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        config.update(parse_config(f"{key} = {value}"))
    return config


def _schedule_from_spec(text: str, horizon: float) -> ControlSchedule:
    parts = text.split(":")
    kind = parts[0]
    if kind == "off":
        return ControlSchedule.off(horizon)
    if kind == "const" and len(parts) == 2:
        return ControlSchedule.constant(float(parts[1]), horizon)
    if kind == "pulse" and len(parts) == 4:
        rate, period, width = (float(v) for v in parts[1:])
        return ControlSchedule.pulse_train(rate, period, width, horizon)
    raise ConfigError(f"cannot parse schedule {text!r} (off | const:R | pulse:R:P:W)")


def _epsilon(args, f_bar: float) -> float:
    if getattr(args, "eps", None) is not None:
        return args.eps
    frac = getattr(args, "eps_frac", None)
    return (0.25 if frac is None else frac) * f_bar


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _initial(model: str, d) -> np.ndarray:
    if model == "reduced":
        return np.array([d.F_bar, 0.0])
    return np.array([d.E_bar, d.M_bar, d.F_bar, 0.0])


def _plot_female(out: Path, name: str, curves, markers, title):
    render_plot(curves, out / name, title=title, ylabel="fertilized females", markers=markers)


def _cmd_simulate(args, p, d) -> int:
    out = _outdir(args)
    u = _schedule_from_spec(args.u, args.T)
    models = ["reduced", "full"] if args.model == "both" else [args.model]
    trajs = {}
    for model in models:
        traj = integrate(model, p, _initial(model, d), u, rtol=args.tol_rel)
        trajs[model] = traj
        path = out / f"simulate_{model}.csv"
        export_trajectory_csv(traj, u, path)
        print(f"wrote {path}")
    if args.model == "both":
        grid = np.linspace(0.0, args.T, 2 * int(args.T) + 1)
        Fr = trajs["reduced"].sample(grid)[:, 0]
        Ff = trajs["full"].sample(grid)[:, 2]
        gap = float(np.max(np.abs(Fr - Ff)) / np.max(np.abs(Ff)))
        path = out / "simulate_compare.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,F_reduced,F_full,u\n")
            for t, a, b in zip(grid, Fr, Ff):
                fh.write(f"{t:.10g},{a:.10g},{b:.10g},{u.rate_at(float(t)):.10g}\n")
        print(f"wrote {path}")
        print(f"sup-norm gap (relative): {gap:.6g}")
        if args.plot:
            _plot_female(
                out, "simulate_compare.svg",
                [Series("reduced", grid, Fr, "#d62728", dash="6 3"),
                 Series("full", grid, Ff, "#1f77b4")],
                {}, f"model comparison, T={args.T:g}",
            )
    elif args.plot:
        traj = trajs[models[0]]
        grid = np.linspace(0.0, args.T, 2 * int(args.T) + 1)
        col = 0 if models[0] == "reduced" else 2
        _plot_female(
            out, f"simulate_{models[0]}.svg",
            [Series("F", grid, traj.sample(grid)[:, col])],
            {}, f"{models[0]} model, u={args.u}",
        )
    return 0


def _cmd_compare(args, p, d) -> int:
    args.model = "both"
    return _cmd_simulate(args, p, d)


def _cmd_equilibria(args, p, d) -> int:
    u_const = 0.0 if args.u == "off" else float(args.u.split(":")[1])
    print(f"R0       = {d.R0:.10g}")
    print(f"Ustar    = {d.Ustar:.10g}  (critical constant release rate)")
    print(f"E_bar    = {d.E_bar:.10g}")
    print(f"M_bar    = {d.M_bar:.10g}")
    print(f"F_bar    = {d.F_bar:.10g}")
    print(f"K        = {p.K:.10g}")
    for eq in equilibria_and_stability(p, u_const):
        state = ", ".join(f"{v:.6g}" for v in eq.state)
        eig = ", ".join(f"{v.real:.6g}{v.imag:+.3g}j" if abs(v.imag) > 0 else f"{v.real:.6g}"
                        for v in eq.eigenvalues)
        print(f"equilibrium ({eq.classification}): ({state})  eigenvalues: [{eig}]")
    return 0


def _cmd_plan(args, p, d) -> int:
    out = _outdir(args)
    eps = _epsilon(args, d.F_bar)
    spec = ProblemSpec(T=args.T, U_bar=args.Ubar, epsilon=eps)
    res = plan_release(p, spec, rtol=args.tol_rel)
    traj = integrate("reduced", p, _initial("reduced", d), res.schedule, rtol=args.tol_rel)
    export_trajectory_csv(traj, res.schedule, out / "plan.csv")
    summary = {
        "J": res.J,
        "t0": res.t0,
        "t1": res.t1,
        "tau1": res.tau1,
        "tau2": res.tau2,
        "T_opt": res.active_duration,
        "F_terminal": res.F_terminal,
        "epsilon": eps,
        "iterations": res.iterations,
        "residual": res.residual,
        "bound_exceeded": res.bound_exceeded,
    }
    (out / "plan_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out / 'plan.csv'} and plan_summary.json")
    print(f"J = {res.J:.6g} released, t0 = {res.t0:.3f}, t1 = {res.t1:.3f}, "
          f"T_opt = {res.active_duration:.2f}, F(T) = {res.F_terminal:.6g}")
    if args.plot:
        grid = np.linspace(0.0, args.T, 4 * int(args.T) + 1)
        F = traj.sample(grid)[:, 0]
        _plot_female(out, "plan_female.svg",
                     [Series("F", grid, F)], {"eps": eps},
                     f"planned release, T={args.T:g}")
        urates = np.array([res.schedule.rate_at(float(t)) for t in grid])
        render_plot([Series("u", grid, urates, "#2ca02c")], out / "plan_control.svg",
                    title="release rate", ylabel="sterile males / day",
                    markers={"Ubar": args.Ubar})
        print(f"wrote {out / 'plan_female.svg'} and plan_control.svg")
    return 0


def _cmd_optimize(args, p, d) -> int:
    from .optimize import adjoint_for_result, solve_direct, verify_switching

    out = _outdir(args)
    eps = _epsilon(args, d.F_bar)
    spec = ProblemSpec(T=args.T, U_bar=args.Ubar, epsilon=eps,
                       model=args.model, objective=args.objective)
    res = solve_direct(p, spec, grid=args.grid)
    sched = res.schedule()
    traj = integrate(args.model, p, _initial(args.model, d), sched, rtol=args.tol_rel)
    export_trajectory_csv(traj, sched, out / "optimize.csv")
    report = None
    try:
        report = verify_switching(res, adjoint_for_result(p, res))
    except Exception as exc:  # noqa: BLE001 - report the failure, keep outputs
        print(f"switching verification failed: {exc}", file=sys.stderr)
    summary = {
        "J": res.J,
        "objective": res.objective,
        "model": res.model,
        "F_terminal": res.F_terminal,
        "epsilon": eps,
        "lambda": res.lam,
        "converged": res.converged,
        "outer_iterations": res.outer_iterations,
        "inner_iterations": res.inner_iterations,
        "pattern": report.pattern if report else None,
        "t0": report.t0 if report else None,
        "t1": report.t1 if report else None,
    }
    (out / "optimize_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out / 'optimize.csv'} and optimize_summary.json")
    print(f"J = {res.J:.6g}, F(T) = {res.F_terminal:.6g}, converged = {res.converged}"
          + (f", pattern = {report.pattern}" if report else ""))
    if args.plot:
        mids = 0.5 * (res.edges[:-1] + res.edges[1:])
        render_plot([Series("u", mids, res.u, "#2ca02c")], out / "optimize_control.svg",
                    title=f"{args.objective} optimizer control", ylabel="sterile males / day",
                    markers={"Ubar": args.Ubar})
    return 0


def _cmd_dual(args, p, d) -> int:
    from .optimize import solve_budget_dual

    out = _outdir(args)
    res = solve_budget_dual(p, T=args.T, U_bar=args.Ubar, budget=args.budget,
                            grid=args.grid)
    sched = res.schedule()
    traj = integrate("reduced", p, _initial("reduced", d), sched, rtol=args.tol_rel)
    export_trajectory_csv(traj, sched, out / "dual.csv")
    summary = {
        "F_terminal": res.F_terminal,
        "budget": res.budget,
        "budget_used": res.budget_used,
        "converged": res.converged,
    }
    (out / "dual_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out / 'dual.csv'} and dual_summary.json")
    print(f"F(T) = {res.F_terminal:.6g} using {res.budget_used:.6g} of {args.budget:.6g}")
    return 0


def _cmd_sweep(args, p, d, config) -> int:
    out = _outdir(args)
    grid = [float(v) for v in args.nu_grid.split(",") if v]
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    rows = sweep(config, grid, T=args.T, U_bar=args.Ubar, eps_frac=args.eps_frac,
                 methods=methods, grid=args.grid, workers=args.workers)
    sweep_csv(rows, out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'}")
    for row in rows:
        print("  " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in row.items()))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        p = params_from_config(config)
        d = derive_quantities(p)
        if args.command == "simulate":
            return _cmd_simulate(args, p, d)
        if args.command == "compare-models":
            return _cmd_compare(args, p, d)
        if args.command == "equilibria":
            return _cmd_equilibria(args, p, d)
        if args.command == "plan":
            return _cmd_plan(args, p, d)
        if args.command == "optimize":
            return _cmd_optimize(args, p, d)
        if args.command == "dual":
            return _cmd_dual(args, p, d)
        if args.command == "sweep":
            return _cmd_sweep(args, p, d, config)
        parser.error(f"unknown command {args.command!r}")
    except _INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    except _USAGE as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
