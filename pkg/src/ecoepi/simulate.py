"""Time integration with positivity, bound and Lyapunov monitors.

The scheme is first-order IMEX: the reaction is evaluated explicitly at the
current state and the diffusion is taken implicitly, so every step costs one
tridiagonal solve ``(1/dt - d Laplacian) u_new = u/dt + f(u)`` per field. The
implicit operator is an M-matrix, so the diffusive half-step cannot create
negative values; a negative value therefore means ``dt`` is too large for the
reaction and the run is aborted instead of clamped.

Two variants are supported:

``full3``
    the susceptible/infected/predator system ``(S, I, P)``;
``prey_predator2``
    the auxiliary zero-flux system ``u_t - d u_xx = b(a-u)u - cuv``,
    ``v_t - D v_xx = k(u-h)v``, whose Lyapunov functionals ``V`` and ``F``
    are monitored.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from .errors import GridError, InitialDataError, ParameterError, PositivityError
from .grid import BC, Grid, _thomas_solve, shifted_operator
from .model import Parameters, State, bound_constants

NEGATIVE_TOL = -1e-10
SNAPSHOT_RATIO = 1.05
BOUND_SLACK = 1e-6
MASS_RTOL = 1e-6
LYAPUNOV_RTOL = 1e-8
CONVERGENCE_SLACK = 0.10
DISTANCE_FLOOR = 1e-12
DT_SAFETY = 0.2

VARIANTS = ("full3", "prey_predator2")
MONITOR_COLUMNS = ("t", "minS", "minI", "minP", "preySup", "massW", "V", "F", "maxP")
CSV_MONITOR_COLUMNS = MONITOR_COLUMNS[:8]

_FULL3, _PP2 = 0, 1
_OK, _NEGATIVE, _NONFINITE = 0, 1, 2


@dataclass(frozen=True)
class PreyPredatorParams:
    """Coefficients of the two-species system; ``h`` is the predator's
    break-even prey density."""

    a: float
    b: float
    c: float
    k: float
    h: float
    d: float = 1.0
    D: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            value = float(value)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(f"parameter {name} must be finite and positive, got {value}")
            object.__setattr__(self, name, value)

    @property
    def v_tilde(self) -> float:
        return self.b * (self.a - self.h) / self.c

    @property
    def limit(self) -> tuple:
        """Constant state every positive solution approaches."""
        if self.h >= self.a:
            return (self.a, 0.0)
        return (self.h, self.v_tilde)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.k, self.h])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Problem:
    p: Union[Parameters, PreyPredatorParams]
    g: Grid
    variant: str = "full3"
    bc: Optional[BC] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.bc is None:
            object.__setattr__(self, "bc", self.g.bc)
        if BC(self.bc) is not self.g.bc:
            raise GridError(f"boundary condition {self.bc} does not match the grid's {self.g.bc.value}")
        object.__setattr__(self, "bc", BC(self.bc))
        expected = Parameters if self.variant == "full3" else PreyPredatorParams
        if not isinstance(self.p, expected):
            raise ParameterError(f"variant {self.variant} needs {expected.__name__}")
        if self.variant == "prey_predator2" and self.g.bc is not BC.NEUMANN:
            raise GridError("the two-species system is posed with zero-flux boundaries")

    @property
    def fields(self) -> tuple:
        return ("S", "I", "P") if self.variant == "full3" else ("u", "v")

    @property
    def diffusivities(self) -> tuple:
        if self.variant == "full3":
            return (self.p.d, self.p.d, self.p.D)
        return (self.p.d, self.p.D)


@dataclass
class MonitorRecord:
    t: float
    min_S: float
    min_I: Optional[float]
    min_P: float
    prey_sup: float
    mass_W: Optional[float]
    V: Optional[float] = None
    F: Optional[float] = None


def _opt(x):
    return None if math.isnan(x) else float(x)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution. ``snapshots[i]`` has shape ``(fields, nodes)`` and
    belongs to ``times[i]``; ``monitor_table`` rows follow MONITOR_COLUMNS and
    are recorded every ``sample_every`` steps."""

    grid: Grid
    fields: tuple
    times: np.ndarray
    snapshots: np.ndarray
    monitor_table: np.ndarray
    dt: float
    sample_every: int
    completed: bool = True

    def __post_init__(self):
        for arr in (self.times, self.snapshots, self.monitor_table):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def state(self, i: int = -1) -> State:
        if self.fields != ("S", "I", "P"):
            raise ValueError("State views exist only for the three-species system")
        return State.from_array(self.snapshots[i])

    def column(self, name: str) -> np.ndarray:
        return self.monitor_table[:, MONITOR_COLUMNS.index(name)]

    def monitors(self) -> list:
        out = []
        for row in self.monitor_table:
            t, mS, mI, mP, sup, mass, V, F, _ = row
            out.append(MonitorRecord(t, mS, _opt(mI), mP, sup, _opt(mass), _opt(V), _opt(F)))
        return out


# --- numerical kernel --------------------------------------------------------


@njit(cache=True)
def _reaction(variant, prm, u, out):
    size = u.shape[1]
    if variant == _FULL3:
        a, b, c, k, ell, gamma, theta, sigma, rho = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7], prm[8]
        for j in range(size):
            S = u[0, j]
            I = u[1, j]
            P = u[2, j]
            w = S + I
            out[0, j] = a * w - b * S - c * w * S - k * I * S - ell * S * P
            out[1, j] = k * I * S - b * I - c * w * I - gamma * I * P
            out[2, j] = theta * S * P + sigma * I * P - rho * P
    else:
        a, b, c, k, h = prm[0], prm[1], prm[2], prm[3], prm[4]
        for j in range(size):
            x = u[0, j]
            y = u[1, j]
            out[0, j] = b * (a - x) * x - c * x * y
            out[1, j] = k * (x - h) * y


@njit(cache=True)
def _monitor(variant, prm, u, weights, delta, t, row):
    size = u.shape[1]
    row[0] = t
    for c_ in range(1, 9):
        row[c_] = np.nan
    if variant == _FULL3:
        mS = np.inf
        mI = np.inf
        mP = np.inf
        sup = -np.inf
        maxP = -np.inf
        mass = 0.0
        for j in range(size):
            S = u[0, j]
            I = u[1, j]
            P = u[2, j]
            mS = min(mS, S)
            mI = min(mI, I)
            mP = min(mP, P)
            maxP = max(maxP, P)
            sup = max(sup, S + I)
            mass += weights[j] * (S + I + delta * P)
        row[1] = mS
        row[2] = mI
        row[3] = mP
        row[4] = sup
        row[5] = mass
        row[8] = maxP
    else:
        a, b, c, k, h = prm[0], prm[1], prm[2], prm[3], prm[4]
        mu = np.inf
        mv = np.inf
        sup = -np.inf
        maxv = -np.inf
        V = 0.0
        for j in range(size):
            x = u[0, j]
            y = u[1, j]
            mu = min(mu, x)
            mv = min(mv, y)
            sup = max(sup, x)
            maxv = max(maxv, y)
            V += weights[j] * (x - a - a * np.log(x / a) + c / k * y)
        row[1] = mu
        row[3] = mv
        row[4] = sup
        row[6] = V
        row[8] = maxv
        if h < a:
            vt = b * (a - h) / c
            F = 0.0
            for j in range(size):
                x = u[0, j]
                y = u[1, j]
                F += weights[j] * (x - h - h * np.log(x / h) + c / k * (y - vt - vt * np.log(y / vt)))
            row[7] = F


@njit(cache=True)
def _imex_run(u, variant, prm, lowers, cps, dens, inv_dt, dt, nsteps, mon_every, snap_steps,
              weights, delta, mon_out, snap_out):
    m, size = u.shape
    f = np.empty_like(u)
    rhs = np.empty(size)
    tmp = np.empty(size)
    imon = 0
    isnap = 0
    _monitor(variant, prm, u, weights, delta, 0.0, mon_out[imon])
    imon += 1
    snap_out[isnap] = u
    isnap += 1
    for step in range(1, nsteps + 1):
        _reaction(variant, prm, u, f)
        for i in range(m):
            for j in range(size):
                rhs[j] = u[i, j] * inv_dt + f[i, j]
            _thomas_solve(lowers[i], cps[i], dens[i], rhs, tmp)
            for j in range(size):
                u[i, j] = tmp[j]
        for i in range(m):
            worst = np.inf
            for j in range(size):
                val = u[i, j]
                if not np.isfinite(val):
                    return _NONFINITE, step, i, val, imon, isnap
                worst = min(worst, val)
            if worst <= -1e-10:
                return _NEGATIVE, step, i, worst, imon, isnap
        if step % mon_every == 0:
            _monitor(variant, prm, u, weights, delta, step * dt, mon_out[imon])
            imon += 1
        if isnap < snap_steps.shape[0] and snap_steps[isnap] == step:
            snap_out[isnap] = u
            isnap += 1
    return _OK, nsteps, -1, 0.0, imon, isnap


# --- driver ------------------------------------------------------------------


def snapshot_steps(nsteps: int, dt: float, sample_every: int, ratio: float = SNAPSHOT_RATIO) -> np.ndarray:
    """Step indices at which full fields are stored: every monitor step up to
    t = 1, then geometrically spaced times, always including the last step."""
    k = sample_every
    monitor_steps = np.arange(0, nsteps + 1, k)
    early = monitor_steps[monitor_steps * dt <= 1.0]
    late = []
    T = nsteps * dt
    if T > 1.0:
        n_geo = int(math.floor(math.log(T) / math.log(ratio)))
        t_geo = ratio ** np.arange(1, n_geo + 1)
        late = np.ceil(t_geo / dt / k - 1e-9).astype(np.int64) * k
        late = late[late <= nsteps]
    steps = np.unique(np.concatenate([early, late, [nsteps]]).astype(np.int64))
    return steps


def _as_fields(prob: Problem, init) -> np.ndarray:
    g = prob.g
    if isinstance(init, State):
        comps = (init.S, init.I, init.P)
    else:
        comps = tuple(init)
    if len(comps) != len(prob.fields):
        raise InitialDataError(f"expected {len(prob.fields)} fields {prob.fields}, got {len(comps)}")
    return np.stack([g.field(c) for c in comps])


def _delta(p) -> float:
    return min(p.ell / p.theta, p.gamma / p.sigma) if isinstance(p, Parameters) else 0.0


def integrate(prob: Problem, init, T: float, dt: float, sample_every: int = 1) -> Trajectory:
    """Advance ``init`` to time ``T`` with step ``dt``.

    ``init`` is a State (or a sequence of scalars/arrays/callables, one per
    field) and must be strictly positive on the stored nodes. Monitors are
    recorded at step 0 and every ``sample_every`` steps.

    Raises
    ------
    PositivityError
        when a field reaches -1e-10 or becomes non-finite; the exception
        carries the trajectory up to the failing step.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ParameterError(f"dt must be positive, got {dt}")
    if not (math.isfinite(T) and T >= dt):
        raise ParameterError(f"horizon T={T} must be at least one step dt={dt}")
    if int(sample_every) != sample_every or sample_every < 1:
        raise ParameterError(f"sample_every must be a positive integer, got {sample_every}")
    sample_every = int(sample_every)
    g = prob.g
    u = _as_fields(prob, init)
    if not np.all(u > 0):
        raise InitialDataError("initial data must be strictly positive on the stored nodes")

    nsteps = int(math.floor(T / dt + 1e-9))
    variant = _FULL3 if prob.variant == "full3" else _PP2
    prm = prob.p.as_array()
    ops = [shifted_operator(g, d, 1.0 / dt) for d in prob.diffusivities]
    lowers = np.stack([op.lower for op in ops])
    cps = np.stack([op.cp for op in ops])
    dens = np.stack([op.den for op in ops])
    snaps = snapshot_steps(nsteps, dt, sample_every)
    mon_out = np.full((nsteps // sample_every + 1, len(MONITOR_COLUMNS)), np.nan)
    snap_out = np.empty((len(snaps), len(prob.fields), g.size))

    status, step, fi, value, imon, isnap = _imex_run(
        u, variant, prm, lowers, cps, dens, 1.0 / dt, dt, nsteps, sample_every, snaps,
        g.weights, _delta(prob.p), mon_out, snap_out,
    )
    if status == _OK:
        return Trajectory(g, prob.fields, snaps * dt, snap_out, mon_out, dt, sample_every)

    t_abort = step * dt
    times = np.append(snaps[:isnap] * dt, t_abort)
    partial = Trajectory(
        g, prob.fields, times, np.concatenate([snap_out[:isnap], u[None]]),
        mon_out[:imon], dt, sample_every, completed=False,
    )
    name = prob.fields[fi]
    if status == _NEGATIVE:
        msg = (f"positivity violated at t={t_abort:.17g}: min {name} = {value:.3e}; "
               f"dt={dt} is too large (recommended <= {recommended_dt(prob, init):.3g})")
    else:
        msg = f"non-finite value in {name} at t={t_abort:.17g}"
    raise PositivityError(msg, t=t_abort, field=name, value=float(value), trajectory=partial)


def recommended_dt(prob: Problem, init) -> float:
    """Heuristic explicit-reaction limit ``0.2 / Lambda``, with ``Lambda``
    bounding the local reaction rates from a-priori bounds of the solution."""
    u0 = _as_fields(prob, init)
    p = prob.p
    if prob.variant == "full3":
        state = State.from_array(u0)
        bc = bound_constants(p, state, prob.g)
        source = (p.a + p.rho - p.b) ** 2 / (4 * p.c * p.rho)
        p_bound = bc.predator_bound
        if p_bound is None:
            p_bound = max(float(np.max(u0[2])), source / bc.delta)
        lam = p.a + p.k * bc.prey_bound + max(p.ell, p.gamma) * p_bound + p.rho
    else:
        U = max(float(np.max(u0[0])), p.a)
        Vb = max(float(np.max(u0[1])), p.v_tilde if p.h < p.a else 0.0)
        lam = p.b * (p.a + U) + p.c * Vb + p.k * (U + p.h)
    return DT_SAFETY / lam


# --- Lyapunov functionals ----------------------------------------------------


def _positive_pair(g: Grid, u, v):
    u = g.field(u)
    v = g.field(v)
    if not np.all(u > 0):
        raise InitialDataError("u must be positive")
    return u, v


def lyapunov_V(g: Grid, u, v, q: PreyPredatorParams) -> float:
    """``int (u - a - a ln(u/a) + (c/k) v) dx``, nonincreasing when h >= a."""
    u, v = _positive_pair(g, u, v)
    return g.integrate(u - q.a - q.a * np.log(u / q.a) + q.c / q.k * v)


def lyapunov_F(g: Grid, u, v, q: PreyPredatorParams) -> float:
    """Entropy-type functional centred at ``(h, b(a-h)/c)``; needs h < a."""
    if q.h >= q.a:
        raise ParameterError("F is defined only for h < a")
    u, v = _positive_pair(g, u, v)
    if not np.all(v > 0):
        raise InitialDataError("v must be positive")
    h, vt = q.h, q.v_tilde
    return g.integrate(u - h - h * np.log(u / h) + q.c / q.k * (v - vt - vt * np.log(v / vt)))


# --- monitor checks ----------------------------------------------------------


@dataclass
class MonitorCheck:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _nonincreasing(values, times, name) -> list:
    out = []
    for i in range(1, len(values)):
        prev, cur = values[i - 1], values[i]
        if cur > prev + LYAPUNOV_RTOL * (1 + abs(prev)):
            out.append(f"{name} increased from {prev:.17g} to {cur:.17g} at t={times[i]:.17g}")
            break
    return out


def check_monitors(prob: Problem, traj: Trajectory) -> MonitorCheck:
    """Compare the recorded monitors with the a-priori estimates.

    Violations: a negative minimum, the prey sup bound, the integrated mass
    bound (with the ``|Omega|`` factor), the pointwise predator bound when
    ``d == D``, and growth of the applicable Lyapunov functional. A failure of
    the mass bound without the ``|Omega|`` factor is only noted.
    """
    out = MonitorCheck()
    tab = traj.monitor_table
    t = tab[:, 0]
    mins = tab[:, 1:4]
    if np.any(mins[~np.isnan(mins)] <= NEGATIVE_TOL):
        out.violations.append("negative field value recorded")
    u0 = traj.snapshots[0]
    p = prob.p
    sup = tab[:, 4]
    if prob.variant == "full3":
        prey_cap = max(float(np.max(u0[0] + u0[1])), (p.a - p.b) / p.c)
    else:
        prey_cap = max(float(np.max(u0[0])), p.a)
    if np.any(sup > prey_cap + BOUND_SLACK):
        i = int(np.argmax(sup - prey_cap))
        out.violations.append(f"prey sup {sup[i]:.17g} exceeds bound {prey_cap:.17g} at t={t[i]:.17g}")

    if prob.variant == "full3":
        state0 = State.from_array(u0)
        bc = bound_constants(p, state0, prob.g)
        mass = tab[:, 5]
        if np.any(mass > bc.mass_bound_tight * (1 + MASS_RTOL)):
            i = int(np.argmax(mass))
            out.violations.append(f"mass {mass[i]:.17g} exceeds bound {bc.mass_bound_tight:.17g}")
        source = (p.a + p.rho - p.b) ** 2 / (4 * p.c * p.rho)
        if np.any(mass > (mass[0] + source) * (1 + MASS_RTOL)):
            out.notes.append("mass exceeds int W0 + (a+rho-b)^2/(4c rho); only the |Omega|-scaled bound holds")
        if bc.predator_bound is not None:
            maxP = tab[:, 8]
            if np.any(maxP > bc.predator_bound * (1 + MASS_RTOL) + BOUND_SLACK):
                out.violations.append(f"predator max {maxP.max():.17g} exceeds bound {bc.predator_bound:.17g}")
    else:
        if p.h >= p.a:
            out.violations += _nonincreasing(tab[:, 6], t, "V")
        else:
            out.violations += _nonincreasing(tab[:, 7], t, "F")
    return out


# --- convergence -------------------------------------------------------------


@dataclass
class ConvergenceReport:
    converged: bool
    terminal_distance: float
    first_passage: Optional[float]
    """Earliest sample time after which the distance stays within tol."""
    tol: float
    window: int
    distances: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "terminal_distance": self.terminal_distance,
            "first_passage": self.first_passage,
            "tol": self.tol,
            "window": self.window,
        }


def target_fields(g: Grid, target, nfields: int) -> np.ndarray:
    if isinstance(target, State):
        arr = target.stack()
    else:
        arr = np.stack([g.field(c) for c in target])
    if arr.shape != (nfields, g.size):
        raise GridError(f"target of shape {arr.shape} does not conform to ({nfields}, {g.size})")
    return arr


def detect_convergence(traj: Trajectory, target, tol: float, window: int = 5) -> ConvergenceReport:
    """Sup-norm convergence test on the stored snapshots.

    Converged means the last ``window`` distances are all within ``tol`` and
    each one exceeds its predecessor by at most 10% (plus a 1e-12 rounding
    floor), i.e. the approach is not drifting away.
    """
    dist = sup_distance_series(traj, target)
    w = max(1, min(window, len(dist)))
    tail = dist[-w:]
    settled = bool(np.all(tail <= tol))
    monotone = bool(np.all(tail[1:] <= tail[:-1] * (1 + CONVERGENCE_SLACK) + DISTANCE_FLOOR))
    above = np.nonzero(dist > tol)[0]
    if len(above) == 0:
        first = float(traj.times[0])
    elif above[-1] + 1 < len(dist):
        first = float(traj.times[above[-1] + 1])
    else:
        first = None
    return ConvergenceReport(settled and monotone, float(dist[-1]), first, tol, w, dist)


def sup_distance_series(traj: Trajectory, target) -> np.ndarray:
    tgt = target_fields(traj.grid, target, len(traj.fields))
    return np.max(np.abs(traj.snapshots - tgt[None]), axis=(1, 2))


# --- export ------------------------------------------------------------------


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else "%.17g" % x


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Long format: one row per (sample time, node)."""
    x = traj.grid.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "x") + traj.fields)
        for t, snap in zip(traj.times, traj.snapshots):
            for j in range(len(x)):
                w.writerow([_fmt(t), _fmt(x[j])] + [_fmt(v) for v in snap[:, j]])


def write_monitors_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_MONITOR_COLUMNS)
        for row in traj.monitor_table:
            w.writerow([_fmt(float(v)) for v in row[: len(CSV_MONITOR_COLUMNS)]])
