"""Scenario engine: predict the attractor, simulate, and score agreement.

A scenario fixes parameters, a grid, a horizon and a seed. The prediction
comes from the regime classifiers; the target is either a constant
equilibrium (zero-flux boundaries) or a computed semi-trivial steady state
(hostile boundaries). The run passes when the trajectory settles within
``tol`` of the target and no monitor is violated.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import EcoEpiError, ParameterError, PositivityError
from .grid import BC, Grid
from .model import (
    Parameters,
    RegimePrediction,
    State,
    classify_dirichlet,
    classify_neumann,
    equilibria,
    neumann_thresholds,
)
from .rng import SplitMix64
from .simulate import Problem, check_monitors, detect_convergence, integrate, sup_distance_series
from .steady import existence_conditions, solve_full, solve_S_star, solve_SI

BOUNDARY_RTOL = 0.02
JITTER = 0.01
FAR_FACTOR = 10.0
ESCAPE_RADIUS = 1e-2
ESCAPE_AMPLITUDE = 1e-3
ESCAPE_T = 100.0

PASS, FAIL, BOUNDARY, UNRESOLVED = "PASS", "FAIL", "BOUNDARY", "UNRESOLVED"
INITS = ("perturbed", "far")


@dataclass(frozen=True)
class Scenario:
    p: Parameters
    grid: Grid
    T: float = 200.0
    dt: float = 1e-3
    tol: float = 1e-3
    seed: int = 0
    init: str = "perturbed"
    sample_every: int = 100
    window: int = 5
    escapes: bool = False
    """Also check that the non-attracting constant equilibria are left."""
    name: str = ""

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if not self.T > 0:
            raise ParameterError("horizon T must be positive")
        if self.init not in INITS:
            raise ParameterError(f"init must be one of {INITS}")

    @property
    def bc(self) -> BC:
        return self.grid.bc

    def replace(self, **changes) -> "Scenario":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return Scenario(**values)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.p.to_dict(),
            "grid": {"length": self.grid.length, "n": self.grid.n, "bc": self.grid.bc.value},
            "T": self.T,
            "dt": self.dt,
            "tol": self.tol,
            "seed": self.seed,
            "init": self.init,
            "sample_every": self.sample_every,
            "window": self.window,
            "escapes": self.escapes,
        }


@dataclass
class EscapeReport:
    equilibrium: str
    escaped: bool
    max_distance: float
    exit_time: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScenarioReport:
    scenario: Scenario
    prediction: Optional[RegimePrediction]
    target: str
    status: str
    terminal_distance: Optional[float] = None
    converged: bool = False
    first_passage: Optional[float] = None
    observed: Optional[str] = None
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    escapes: list = field(default_factory=list)
    error: Optional[str] = None
    eigenvalues: Optional[dict] = None
    timing: float = 0.0
    """Wall-clock seconds; left out of the serialised report."""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "target": self.target,
            "status": self.status,
            "converged": self.converged,
            "terminal_distance": self.terminal_distance,
            "first_passage": self.first_passage,
            "observed": self.observed,
            "violations": list(self.violations),
            "notes": list(self.notes),
            "escapes": [e.to_dict() for e in self.escapes],
            "error": self.error,
            "eigenvalues": self.eigenvalues,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(obj) -> str:
    """Deterministic JSON; floats use the shortest round-tripping repr."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# --- targets and candidate attractors ---------------------------------------


def candidate_targets(p: Parameters, g: Grid) -> dict:
    """Every state the run could settle on, keyed by attractor name.

    Zero-flux: the existing constant equilibria. Hostile boundary: the
    trivial state, ``(S*, 0, 0)``, ``(S~, I~, 0)`` and the positive steady
    state, whichever exist on this grid.
    """
    if g.bc is BC.NEUMANN:
        return {
            name: State.constant(g, value) for name, value in equilibria(p).existing().items()
        }
    zero = np.zeros(g.size)
    out = {"extinction": State(zero, zero, zero)}
    s_star = solve_S_star(g, p)
    if s_star is None:
        return out
    out["Sstar00"] = State(np.array(s_star), zero, zero)
    si = solve_SI(g, p)
    if si is not None:
        out["StildeItilde0"] = State(si[0], si[1], zero)
    if p.special_case:
        try:
            full = solve_full(g, p)
        except EcoEpiError:
            full = None
        if full is not None and full.exists:
            sol = full.solution
            out["coexistence"] = State(sol["S"], sol["I"], sol["P"])
    return out


def predict(p: Parameters, g: Grid) -> tuple:
    """``(prediction, eigenvalue bundle or None)``; the prediction is None
    outside the special case."""
    if not p.special_case:
        return None, None
    if g.bc is BC.NEUMANN:
        return classify_neumann(p), None
    eig = existence_conditions(g, p, include_full=False)
    return classify_dirichlet(p, eig), eig


def _describe(name: str, state: State, g: Grid) -> str:
    if g.bc is BC.NEUMANN:
        vals = ", ".join(repr(float(v[0])) for v in (state.S, state.I, state.P))
        return f"constant {name} = ({vals})"
    return f"steady state {name}"


def initial_data(target: State, g: Grid, kind: str, seed: int) -> State:
    """Positive initial data around ``target``.

    Zero-flux: ``scale * target * (1 + 0.5 cos(pi x / l)) + 0.05`` plus a
    seeded jitter in ``[0, 0.01)``; ``scale`` is 10 for far data.
    Hostile boundary: ``alpha * sin(pi x / l)`` bumps with a seeded relative
    jitter, where ``alpha`` exceeds the target's peak.
    """
    rng = SplitMix64(seed)
    scale = FAR_FACTOR if kind == "far" else 1.0
    shape_cos = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
    bump = np.sin(np.pi * g.x / g.length)
    out = []
    for comp in (target.S, target.I, target.P):
        jitter = np.array([rng.random() for _ in range(g.size)])
        if g.bc is BC.NEUMANN:
            out.append(scale * comp * shape_cos + 0.05 + JITTER * jitter)
        else:
            alpha = scale * (1.5 * float(np.max(comp)) + 0.1)
            out.append(alpha * bump * (1 + 10 * JITTER * jitter))
    return State(*out)


def observed_attractor(final: State, candidates: dict, tol: float) -> Optional[str]:
    best, best_d = None, math.inf
    for name, st in candidates.items():
        dist = final.sup_distance(st)
        if dist < best_d:
            best, best_d = name, dist
    return best if best_d <= tol else None


# --- escape checks -----------------------------------------------------------


def escape_check(p: Parameters, g: Grid, name: str, value, *, dt: float, seed: int = 0,
                 T: float = ESCAPE_T) -> EscapeReport:
    """Start a small positive perturbation of a constant equilibrium and
    record whether the trajectory leaves the ``1e-2`` ball around it."""
    rng = SplitMix64(seed)
    shape_cos = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
    target = State.constant(g, value)
    init = State(*(
        comp + ESCAPE_AMPLITUDE * (shape_cos + np.array([rng.random() for _ in range(g.size)])) / 2.5
        for comp in (target.S, target.I, target.P)
    ))
    traj = integrate(Problem(p, g), init, T, dt, max(1, int(round(0.1 / dt))))
    dist = sup_distance_series(traj, target)
    out = np.nonzero(dist > ESCAPE_RADIUS)[0]
    exit_time = float(traj.times[out[0]]) if len(out) else None
    return EscapeReport(name, bool(len(out)), float(dist.max()), exit_time)


# --- scenarios ---------------------------------------------------------------


def run_scenario(s: Scenario) -> ScenarioReport:
    """Predict, simulate and score one scenario.

    Status is PASS or FAIL for a resolved prediction, BOUNDARY when a
    threshold lies within 2% (reported but not judged), and UNRESOLVED when no
    convergence result applies (observed behaviour is still reported).
    """
    start = time.perf_counter()
    g, p = s.grid, s.p
    try:
        prediction, eig = predict(p, g)
        candidates = candidate_targets(p, g)
    except EcoEpiError as exc:
        return ScenarioReport(s, None, "", FAIL, error=f"{type(exc).__name__}: {exc}",
                              timing=time.perf_counter() - start)

    eig_dict = None if eig is None else eig.to_dict()
    judged = prediction is not None and prediction.attractor in candidates
    if judged:
        tname = prediction.attractor
    elif "coexistence" in candidates:
        tname = "coexistence"
    else:
        tname = max(candidates, key=lambda k: float(np.max(candidates[k].stack())))
    target = candidates[tname]
    report = ScenarioReport(s, prediction, _describe(tname, target, g), UNRESOLVED, eigenvalues=eig_dict)

    init = initial_data(target, g, s.init, s.seed)
    prob = Problem(p, g)
    try:
        traj = integrate(prob, init, s.T, s.dt, s.sample_every)
    except PositivityError as exc:
        report.status = FAIL
        report.error = str(exc)
        report.violations.append("positivity abort")
        report.timing = time.perf_counter() - start
        return report

    conv = detect_convergence(traj, target, s.tol, s.window)
    mon = check_monitors(prob, traj)
    report.converged = conv.converged
    report.terminal_distance = conv.terminal_distance
    report.first_passage = conv.first_passage
    report.violations += mon.violations
    report.notes += mon.notes
    report.observed = observed_attractor(traj.state(-1), candidates, s.tol)

    if s.escapes and g.bc is BC.NEUMANN and prediction is not None:
        for name, value in equilibria(p).existing().items():
            if name != prediction.attractor:
                report.escapes.append(escape_check(p, g, name, value, dt=s.dt, seed=s.seed))

    if not judged:
        report.status = UNRESOLVED
        report.notes.append("no convergence result covers this regime; behaviour reported only")
    elif prediction.boundary_case or prediction.margin <= BOUNDARY_RTOL:
        report.status = BOUNDARY
    else:
        ok = conv.converged and mon.ok and all(e.escaped for e in report.escapes)
        report.status = PASS if ok else FAIL
    report.timing = time.perf_counter() - start
    return report


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("ECOEPI_THREADS", "1") or 1)
    return max(1, int(threads))


def run_many(scenarios: Sequence[Scenario], threads: Optional[int] = None) -> list:
    """Run scenarios independently; results keep the input order."""
    scenarios = list(scenarios)
    n = min(resolve_threads(threads), max(1, len(scenarios)))
    if n == 1 or len(scenarios) <= 1:
        return [run_scenario(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run_scenario, scenarios))


# --- sweeps ------------------------------------------------------------------


SWEEP_AXES = ("a", "b", "c", "k", "ell", "theta", "rho", "d", "D")


@dataclass
class Transition:
    kind: str
    """``predicted`` or ``observed``."""
    lo: float
    hi: float
    before: Optional[str]
    after: Optional[str]
    threshold: Optional[float] = None
    """Axis value where the discrete classifier switches."""
    analytic: Optional[float] = None
    """Root of a closed-form threshold formula inside the bracket, if any."""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepTable:
    axis: str
    values: list
    reports: list
    transitions: list = field(default_factory=list)

    def rows(self) -> list:
        out = []
        for v, r in zip(self.values, self.reports):
            pred = None if r.prediction is None else r.prediction.attractor
            out.append({
                self.axis: v,
                "predicted": pred,
                "observed": r.observed,
                "distance": r.terminal_distance,
                "passed": r.status if r.status in (BOUNDARY, UNRESOLVED) else r.passed,
                "status": r.status,
            })
        return out

    @property
    def failed(self) -> bool:
        return any(r.status == FAIL for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "values": list(self.values),
            "rows": self.rows(),
            "transitions": [t.to_dict() for t in self.transitions],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis, "predicted", "observed", "distance", "passed"])
            for row in self.rows():
                dist = row["distance"]
                w.writerow([
                    "%.17g" % row[self.axis],
                    row["predicted"] or "",
                    row["observed"] or "",
                    "" if dist is None else "%.17g" % dist,
                    row["passed"],
                ])


def _attractor_at(base: Scenario, axis: str, value: float) -> Optional[str]:
    pred, _ = predict(base.p.replace(**{axis: value}), base.grid)
    return None if pred is None else pred.attractor


def locate_threshold(base: Scenario, axis: str, lo: float, hi: float, xtol: float = 1e-12) -> float:
    """Bisection on the predicted attractor between two axis values."""
    left = _attractor_at(base, axis, lo)
    for _ in range(200):
        if hi - lo <= xtol * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        if _attractor_at(base, axis, mid) == left:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _closed_form_gaps(p: Parameters, g: Grid) -> dict:
    """Signed distances to the thresholds that have closed forms: the
    constant-equilibrium thresholds in ``a`` (zero flux) and the continuum
    extinction threshold ``d pi^2 / l^2 = a - b`` (hostile boundary)."""
    if g.bc is BC.NEUMANN:
        gaps = {name: p.a - thr for name, thr in neumann_thresholds(p).items()}
        gaps["k_c"] = p.k - p.c
        return gaps
    return {"lam0": p.d * math.pi**2 / g.length**2 + p.b - p.a}


def analytic_threshold(base: Scenario, axis: str, lo: float, hi: float) -> Optional[float]:
    def gaps(v):
        return _closed_form_gaps(base.p.replace(**{axis: v}), base.grid)

    left, right = gaps(lo), gaps(hi)
    for key in left:
        if key in right and left[key] * right[key] < 0:
            return brentq(lambda v: gaps(v)[key], lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        if key in right and (left[key] == 0 or right[key] == 0):
            return lo if left[key] == 0 else hi
    return None


def _transitions(kind: str, values, labels) -> list:
    out = []
    for i in range(1, len(values)):
        if labels[i] != labels[i - 1]:
            out.append(Transition(kind, values[i - 1], values[i], labels[i - 1], labels[i]))
    return out


def sweep(base: Scenario, axis: str, values: Sequence[float], threads: Optional[int] = None) -> SweepTable:
    """One independent scenario per axis value, with predicted and observed
    transitions. Predicted transitions carry the threshold located by
    bisection on the classifier; observed ones carry the nearest such
    threshold inside their bracket."""
    if axis not in SWEEP_AXES:
        raise ParameterError(f"cannot sweep {axis!r}; choose from {SWEEP_AXES}")
    values = [float(v) for v in values]
    if any(not math.isfinite(v) for v in values):
        raise ParameterError("sweep values must be finite")
    if values != sorted(values):
        raise ParameterError("sweep values must be sorted")
    scenarios = []
    for v in values:
        try:
            scenarios.append(base.replace(p=base.p.replace(**{axis: v}), name=f"{axis}={v!r}"))
        except ParameterError as exc:
            scenarios.append(exc)
    runnable = [s for s in scenarios if isinstance(s, Scenario)]
    results = iter(run_many(runnable, threads))
    reports = []
    for v, s in zip(values, scenarios):
        if isinstance(s, Scenario):
            reports.append(next(results))
        else:
            reports.append(ScenarioReport(base, None, "", FAIL, error=str(s)))

    table = SweepTable(axis, values, reports)
    predicted = [None if r.prediction is None else r.prediction.attractor for r in reports]
    pred_tr = _transitions("predicted", values, predicted)
    for t in pred_tr:
        if t.before is not None and t.after is not None:
            t.threshold = locate_threshold(base, axis, t.lo, t.hi)
            t.analytic = analytic_threshold(base, axis, t.lo, t.hi)
    obs_tr = _transitions("observed", values, [r.observed for r in reports])
    for t in obs_tr:
        inside = [pt for pt in pred_tr if pt.threshold is not None and t.lo <= pt.threshold <= t.hi]
        if inside:
            t.threshold = inside[0].threshold
            t.analytic = inside[0].analytic
    table.transitions = pred_tr + obs_tr
    return table
