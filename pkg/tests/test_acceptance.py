"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from oracles import dense_principal, ode_rhs, pars_tuple, rk4
from scipy.integrate import solve_ivp

from ecoepi import cli
from ecoepi.config import load_config
from ecoepi.eigen import lambda0, principal_eigenvalue
from ecoepi.grid import Grid
from ecoepi.model import PRESETS, Parameters
from ecoepi.simulate import PreyPredatorParams, Problem, check_monitors, integrate
from ecoepi.steady import (
    existence_conditions,
    solve_full,
    solve_logistic,
    solve_S_star,
    solve_SI,
    steady_report,
    uniqueness_probe,
)

SUITE = Path(__file__).resolve().parent.parent / "configs" / "acceptance_suite.json"

COEXISTENCE = [
    Parameters(a=3, b=0.5, c=1, k=k, ell=1, theta=theta, rho=1)
    for k, theta in [(4, 1.5), (6, 2), (8, 3), (8, 2), (6, 3)]
]


@pytest.fixture(scope="module")
def suite_run(tmp_path_factory):
    """The bundled acceptance suite through the CLI, run once."""
    out = tmp_path_factory.mktemp("suite")
    code = cli.main(["verify", "--config", str(SUITE), "--out", str(out)])
    reports = {}
    for path in sorted(out.glob("report_*.json")):
        rep = json.loads(path.read_text())
        reports[rep["scenario"]["name"]] = rep
    return code, reports


# 1 -----------------------------------------------------------------------------


def test_criterion_1_eigenvalues(acceptance_line):
    g = Grid(math.pi, 400, "dirichlet")
    err = abs(lambda0(g, 1.0) - 1.0)
    rng = np.random.default_rng(20)
    gs = Grid(math.pi, 200, "dirichlet")
    shift_err, mono_ok, dense_err = 0.0, True, 0.0
    for _ in range(20):
        q = rng.uniform(-10, 10) + rng.uniform(-5, 5, gs.size) * np.sin(rng.uniform(0, 5) * gs.x)
        d = float(rng.uniform(0.2, 3.0))
        c = float(rng.uniform(-20, 20))
        lam = principal_eigenvalue(gs, d, q).lam
        shift_err = max(shift_err, abs(principal_eigenvalue(gs, d, q + c).lam - lam - c))
        bump = rng.uniform(0, 2, gs.size)
        mono_ok &= principal_eigenvalue(gs, d, q + bump).lam >= lam - 1e-9 * (1 + abs(lam))
        mono_ok &= principal_eigenvalue(gs, 1.5 * d, q).lam >= lam - 1e-9 * (1 + abs(lam))
        dense_err = max(dense_err, abs(lam - dense_principal(gs.n, gs.length, d, q)) / (1 + abs(lam)))
    ok = err <= 1e-4 and shift_err <= 1e-9 and mono_ok and dense_err <= 1e-9
    acceptance_line(1, ok, f"|lambda0-1|={err:.2e} at n=400, shift error {shift_err:.1e}, "
                           f"monotone on 20 potentials: {mono_ok}")
    assert err <= 1e-4
    assert shift_err <= 1e-9
    assert mono_ok
    assert dense_err <= 1e-9


# 2 -----------------------------------------------------------------------------


def test_criterion_2_logistic_threshold(acceptance_line):
    g = Grid(1.0, 200, "dirichlet")
    step = 0.005
    details, ok = [], True
    for d in (0.5, 1.0, 2.0):
        thr = d * math.pi**2
        ratios = 1 + step * np.arange(-20, 21)
        exists = [solve_logistic(g, d, thr * r, 1.0, predict=False) is not None for r in ratios]
        flips = [i for i in range(1, len(ratios)) if exists[i] != exists[i - 1]]
        single = len(flips) == 1 and not exists[0] and exists[-1]
        near = single and ratios[flips[0] - 1] - step <= 1.0 <= ratios[flips[0]] + step
        guard = all(e == (r > 1) for r, e in zip(ratios, exists) if abs(r - 1) > 0.02)
        ok &= single and near and guard
        where = f"{ratios[flips[0]]:.3f}" if flips else "none"
        details.append(f"d={d}: flip at (a-b)/(d pi^2)={where}")
    acceptance_line(2, ok, "; ".join(details))
    assert ok


# 3 -----------------------------------------------------------------------------


def test_criterion_3_decomposition(acceptance_line):
    g = Grid(math.pi, 200, "dirichlet")
    si_sets = [
        Parameters(a=3, b=0.5, c=1, k=3, ell=1, theta=1, rho=3),
        Parameters(a=4, b=0.5, c=1, k=2.5, ell=1, theta=0.5, rho=2),
    ]
    worst_si = worst_full = worst_res = 0.0
    for p in si_sets:
        rep = steady_report(g, p, "SI")
        assert rep.exists_predicted and rep.exists
        S, I = solve_SI(g, p)
        worst_si = max(worst_si, float(np.max(np.abs(S + I - solve_S_star(g, p)))))
        worst_res = max(worst_res, rep.residual)
    for p in COEXISTENCE:
        rep = solve_full(g, p)
        assert rep.exists_predicted and rep.exists
        worst_full = max(worst_full, sum(rep.identities.values()))
        worst_res = max(worst_res, rep.residual)
    ok = worst_si <= 1e-9 and worst_full <= 1e-9 and worst_res <= 1e-9
    acceptance_line(3, ok, f"|S~+I~-S*|={worst_si:.1e}, |S+I-S^|+|P-P^|={worst_full:.1e}, "
                           f"max residual {worst_res:.1e}")
    assert ok


# 4 -----------------------------------------------------------------------------


def test_criterion_4_uniqueness(acceptance_line):
    g = Grid(math.pi, 200, "dirichlet")
    spreads, failures = [], 0
    for i, p in enumerate(COEXISTENCE):
        probe = uniqueness_probe(g, p, "full", starts=5, seed=i)
        failures += 5 - len(probe.solutions)
        spreads.append(probe.spread)
    ok = failures == 0 and max(spreads) <= 1e-7
    acceptance_line(4, ok, f"25 starts on 5 coexistence sets, {failures} failed, max spread {max(spreads):.1e}")
    assert failures == 0
    assert max(spreads) <= 1e-7


# 5 -----------------------------------------------------------------------------


NEUMANN = {"PS-B": "E1", "PS-C": "EI", "PS-D": "EP", "PS-A": "Estar"}


def test_criterion_5_neumann_stability(suite_run, acceptance_line):
    code, reports = suite_run
    problems = []
    for preset, attractor in NEUMANN.items():
        for init in ("perturbed", "far"):
            rep = reports[f"{preset}-{init}"]
            sc = rep["scenario"]
            assert (sc["T"], sc["dt"], sc["grid"]["n"], sc["tol"]) == (200, 1e-3, 200, 1e-3)
            if rep["status"] != "PASS" or rep["observed"] != attractor or rep["terminal_distance"] > 1e-3:
                problems.append(f"{preset}-{init}: {rep['status']} observed={rep['observed']}")
            if init == "perturbed":
                escaped = {e["equilibrium"] for e in rep["escapes"] if e["escaped"]}
                expected = {e for e in ("E0", "E1", "EI", "EP", "Estar") if e != attractor}
                listed = {e["equilibrium"] for e in rep["escapes"]}
                if not ({"E0"} <= listed and listed <= expected and escaped == listed):
                    problems.append(f"{preset}: escapes {sorted(escaped)} of {sorted(listed)}")
    worst = max(reports[f"{p}-{i}"]["terminal_distance"] for p in NEUMANN for i in ("perturbed", "far"))
    ok = not problems
    acceptance_line(5, ok, f"8 scenarios, max terminal distance {worst:.1e}, non-attractors escaped"
                    + ("" if ok else f"; problems: {problems}"))
    assert not problems


# 6 -----------------------------------------------------------------------------


DIRICHLET = {
    "dirichlet-extinction": "extinction",
    "dirichlet-Sstar00": "Sstar00",
    "dirichlet-StildeItilde0": "StildeItilde0",
}


def test_criterion_6_dirichlet_trichotomy(suite_run, acceptance_line):
    code, reports = suite_run
    problems = []
    for name, attractor in DIRICHLET.items():
        rep = reports[name]
        eig = rep["eigenvalues"]
        p = rep["scenario"]["params"]
        if attractor == "extinction":
            signs = eig["lam_b_minus_a"] > 0
        elif attractor == "Sstar00":
            signs = eig["lam_b_minus_a"] < 0 and eig["lam_predator"] > 0 and (
                p["k"] <= p["c"] or eig["lam_infection"] > 0)
        else:
            signs = eig["lam_b_minus_a"] < 0 and eig["lam_infection"] < 0 and eig["lam_predator"] > 0
        if not signs:
            problems.append(f"{name}: eigenvalue signs {eig}")
        if rep["scenario"]["T"] != 300 or rep["scenario"]["tol"] != 5e-3:
            problems.append(f"{name}: horizon/tolerance changed")
        if rep["status"] != "PASS" or rep["observed"] != attractor or rep["terminal_distance"] > 5e-3:
            problems.append(f"{name}: {rep['status']} observed={rep['observed']} d={rep['terminal_distance']}")
    worst = max(reports[n]["terminal_distance"] for n in DIRICHLET)
    ok = not problems
    acceptance_line(6, ok, f"3 clauses, max terminal distance {worst:.1e}" + ("" if ok else f"; {problems}"))
    assert not problems


# 7 -----------------------------------------------------------------------------


def test_criterion_7_monitors(suite_run, acceptance_line):
    code, reports = suite_run
    passing = [r for r in reports.values() if r["status"] == "PASS"]
    suite_clean = all(not r["violations"] for r in passing) and code == cli.EXIT_OK

    g = Grid(2.0, 50, "neumann")
    shape = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
    lyap_ok, limit_err = True, 0.0
    runs = [((2, 1, 2, 1, 4), "V"), ((2, 1, 1, 1, 3), "V"), ((3, 2, 1, 0.5, 2), "F"), ((2, 2, 1, 0.5, 1), "F")]
    for coeffs, which in runs:
        q = PreyPredatorParams(*coeffs)
        prob = Problem(q, g, variant="prey_predator2")
        traj = integrate(prob, (1.5 * shape, 0.7 * shape), 60.0, 1e-4, sample_every=1000)
        check = check_monitors(prob, traj)
        col = traj.column(which)
        lyap_ok &= check.ok and bool(np.all(np.isfinite(col)))
        limit_err = max(limit_err, float(np.max(np.abs(traj.final - np.array(q.limit)[:, None]))))
    ok = suite_clean and lyap_ok and limit_err <= 1e-3
    acceptance_line(7, ok, f"{len(passing)} passing suite runs without monitor violations: {suite_clean}; "
                           f"V/F nonincreasing: {lyap_ok}; two-species limit error {limit_err:.1e}")
    assert suite_clean
    assert lyap_ok
    assert limit_err <= 1e-3


# 8 -----------------------------------------------------------------------------


def test_criterion_8_ode_oracle(acceptance_line):
    g = Grid(1.0, 4, "neumann")
    y0 = (0.8, 0.4, 0.3)
    worst, cross = 0.0, 0.0
    for name in ("PS-A", "PS-C", "PS-D"):
        p = PRESETS[name]
        traj = integrate(Problem(p, g), y0, 10.0, 1e-4, sample_every=1000)
        pars = pars_tuple(p)
        ref = solve_ivp(lambda t, y: ode_rhs(*y, *pars), (0, 10), y0, method="DOP853",
                        rtol=1e-12, atol=1e-14).y[:, -1]
        cross = max(cross, float(np.max(np.abs(np.array(rk4(y0, pars, 10.0, 1e-3)) - ref))))
        worst = max(worst, float(np.max(np.abs(traj.final - ref[:, None]))))
    ok = worst <= 1e-5 and cross <= 1e-9
    acceptance_line(8, ok, f"IMEX dt=1e-4 vs DOP853 at T=10 on 3 sets: max error {worst:.1e} "
                           f"(RK4 cross-check {cross:.1e})")
    assert cross <= 1e-9
    assert worst <= 1e-5


# 9 -----------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path, acceptance_line):
    data = json.loads(SUITE.read_text())
    picked = [s for s in data["scenarios"] if s["name"] in ("PS-A-perturbed", "dirichlet-StildeItilde0")]
    for s in picked:
        s["grid"]["n"] = 60
        s["run"]["T"] = 30
    cfg = tmp_path / "det.json"
    cfg.write_text(json.dumps({"scenarios": picked}))
    outs = []
    for i, threads in enumerate(("1", "2")):
        out = tmp_path / f"run{i}"
        cli.main(["verify", "--config", str(cfg), "--out", str(out), "--threads", threads])
        outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.json"))})
    ok = outs[0] == outs[1] and len(outs[0]) == 4
    acceptance_line(9, ok, f"{len(outs[0])} JSON files byte-identical across two verify runs: {outs[0] == outs[1]}")
    assert ok
    assert load_config(cfg).scenarios[0].seed == 7
