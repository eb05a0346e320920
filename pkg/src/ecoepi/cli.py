"""Command-line entry point: ``ecoepi <command> --config run.json --out dir``.

Exit codes: 0 success, 2 invalid config, 3 solver failure, 4 positivity
abort during simulation, 5 at least one verification scenario failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, load_config
from .eigen import principal_eigenvalue
from .errors import PositivityError, SolverError
from .grid import BC
from .model import Parameters
from .simulate import (
    Problem,
    check_monitors,
    integrate,
    write_monitors_csv,
    write_trajectory_csv,
)
from .steady import steady_report
from .verify import (
    BOUNDARY,
    FAIL,
    candidate_targets,
    dumps,
    initial_data,
    predict,
    resolve_threads,
    run_many,
    sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_POSITIVITY = 4
EXIT_VERIFY = 5


def _fmt(x) -> str:
    return "%.17g" % x


def _write_columns(path: Path, header, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _prepare_out(out: Path, cfg: Config) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dumps(cfg.to_dict()))


# --- commands ----------------------------------------------------------------


def cmd_eigen(cfg: Config, out: Path, threads: int) -> int:
    """Principal Dirichlet eigenvalue of -d u'' + q u; writes phi.csv."""
    g = cfg.grid
    _require(g is not None and g.bc is BC.DIRICHLET, "eigen needs a Dirichlet grid block")
    eig = cfg.eigen or {}
    d = eig.get("d", cfg.params.d if isinstance(cfg.params, Parameters) else 1.0)
    q = eig.get("q", 0.0)
    q = np.asarray(q, dtype=float)
    _require(q.ndim == 0 or q.shape == (g.size,), f"eigen/q must be a number or {g.size} values")
    res = principal_eigenvalue(g, d, q)
    _prepare_out(out, cfg)
    _write_columns(out / "phi.csv", ("x", "phi"), (g.x, res.phi))
    print(f"lambda={_fmt(res.lam)}")
    return EXIT_OK


def cmd_steady(cfg: Config, out: Path, threads: int) -> int:
    """Steady state for a target; writes steady.json and steady.csv."""
    _require(cfg.variant == "full3", "steady solves the three-species model")
    _require(cfg.params is not None and cfg.grid is not None, "steady needs params and grid blocks")
    _require(cfg.grid.bc is BC.DIRICHLET, "steady states are computed on a Dirichlet grid")
    _require(cfg.steady_target is not None, "steady needs a steady.target")
    if cfg.steady_target == "full":
        _require(cfg.params.special_case, "the full target needs gamma == ell and sigma == theta")
    report = steady_report(cfg.grid, cfg.params, cfg.steady_target)
    _prepare_out(out, cfg)
    (out / "steady.json").write_text(dumps(report.to_dict()))
    if report.exists:
        names = [f for f in ("S", "I", "P") if f in report.solution]
        _write_columns(out / "steady.csv", ["x"] + names,
                       [cfg.grid.x] + [report.solution[f] for f in names])
    print(f"target={report.target} exists={str(report.exists).lower()} "
          f"predicted={str(report.exists_predicted).lower()}"
          + ("" if report.residual is None else f" residual={report.residual:.3e}"))
    return EXIT_OK


def _initial(cfg: Config, prob: Problem):
    g, p = cfg.grid, cfg.params
    if cfg.initial is not None:
        given = dict(cfg.initial)
        missing = [f for f in prob.fields if f not in given]
        extra = [f for f in given if f not in prob.fields]
        _require(not missing and not extra,
                 f"initial block must give exactly the fields {prob.fields}")
        comps = []
        for f in prob.fields:
            v = np.asarray(given[f], dtype=float)
            _require(v.ndim == 0 or v.shape == (g.size,), f"initial/{f} must be a number or {g.size} values")
            comps.append(g.field(v))
        return comps
    if prob.variant == "prey_predator2":
        shape = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
        u_ref, v_ref = p.limit
        return [u_ref * shape + 0.05, max(v_ref, 0.5) * shape + 0.05]
    pred, _ = predict(p, g)
    cands = candidate_targets(p, g)
    name = pred.attractor if pred is not None and pred.attractor in cands else list(cands)[-1]
    return list(initial_data(cands[name], g, cfg.run.init, cfg.run.seed).stack())


def cmd_simulate(cfg: Config, out: Path, threads: int) -> int:
    """Time integration; writes traj.csv and monitors.csv."""
    _require(cfg.params is not None and cfg.grid is not None, "simulate needs params and grid blocks")
    prob = Problem(cfg.params, cfg.grid, cfg.variant)
    init = _initial(cfg, prob)
    run = cfg.run
    _require(run.T >= run.dt, "run/T must be at least one step run/dt")
    _require(all(np.all(c > 0) for c in init), "initial data must be strictly positive")
    _prepare_out(out, cfg)
    try:
        traj = integrate(prob, init, run.T, run.dt, run.sample_every)
    except PositivityError as exc:
        if exc.trajectory is not None:
            write_trajectory_csv(exc.trajectory, out / "traj.csv")
            write_monitors_csv(exc.trajectory, out / "monitors.csv")
        print(f"positivity abort at t={_fmt(exc.t)}: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    write_trajectory_csv(traj, out / "traj.csv")
    write_monitors_csv(traj, out / "monitors.csv")
    check = check_monitors(prob, traj)
    for v in check.violations:
        print(f"monitor violation: {v}", file=sys.stderr)
    for n in check.notes:
        print(f"note: {n}", file=sys.stderr)
    print(f"completed t={_fmt(traj.times[-1])} samples={len(traj)} monitors={len(traj.monitor_table)}")
    return EXIT_OK


def cmd_verify(cfg: Config, out: Path, threads: int) -> int:
    """Run scenarios and score them; writes one JSON report per scenario."""
    scenarios = list(cfg.scenarios) if cfg.scenarios else [cfg.scenario()]
    _prepare_out(out, cfg)
    reports = run_many(scenarios, threads)
    summary = []
    for i, (s, r) in enumerate(zip(scenarios, reports)):
        name = s.name or f"scenario{i}"
        (out / f"report_{i:03d}_{_safe(name)}.json").write_text(r.to_json())
        pred = "-" if r.prediction is None else r.prediction.attractor
        dist = "-" if r.terminal_distance is None else f"{r.terminal_distance:.3e}"
        print(f"{r.status:<10} {name}: predicted={pred} observed={r.observed} distance={dist}"
              + (f" error={r.error}" if r.error else ""))
        summary.append({"name": name, **r.to_dict()})
    (out / "verify.json").write_text(dumps(summary))
    return EXIT_VERIFY if any(r.status == FAIL for r in reports) else EXIT_OK


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def cmd_sweep(cfg: Config, out: Path, threads: int) -> int:
    """One scenario per axis value; writes sweep.csv and sweep.json."""
    _require(cfg.sweep_axis is not None, "sweep needs a sweep block")
    base = cfg.scenario()
    _prepare_out(out, cfg)
    table = sweep(base, cfg.sweep_axis, cfg.sweep_values, threads)
    table.write_csv(out / "sweep.csv")
    (out / "sweep.json").write_text(dumps(table.to_dict()))
    for row in table.rows():
        print(f"{cfg.sweep_axis}={_fmt(row[cfg.sweep_axis])} predicted={row['predicted']} "
              f"observed={row['observed']} status={row['status']}")
    for t in table.transitions:
        thr = "" if t.threshold is None else f" threshold={_fmt(t.threshold)}"
        ana = "" if t.analytic is None else f" analytic={_fmt(t.analytic)}"
        print(f"transition[{t.kind}] {t.before} -> {t.after} in [{_fmt(t.lo)}, {_fmt(t.hi)}]{thr}{ana}")
    n_boundary = sum(r.status == BOUNDARY for r in table.reports)
    if n_boundary:
        print(f"{n_boundary} boundary row(s) excluded from pass/fail")
    return EXIT_VERIFY if table.failed else EXIT_OK


COMMANDS = {
    "eigen": cmd_eigen,
    "steady": cmd_steady,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecoepi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes for verify/sweep (default: $ECOEPI_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("ECOEPI_LOGLEVEL", "WARNING"))
    try:
        cfg = load_config(args.config)
        threads = resolve_threads(args.threads)
        return COMMANDS[args.command](cfg, Path(args.out), threads)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
