import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import ode_rhs, pars_tuple
from scipy.integrate import solve_ivp

from ecoepi.errors import GridError, InitialDataError, ParameterError, PositivityError
from ecoepi.grid import Grid
from ecoepi.model import PRESETS, State, equilibria
from ecoepi.simulate import (
    CSV_MONITOR_COLUMNS,
    PreyPredatorParams,
    Problem,
    Trajectory,
    check_monitors,
    detect_convergence,
    integrate,
    lyapunov_F,
    lyapunov_V,
    recommended_dt,
    snapshot_steps,
    sup_distance_series,
    write_monitors_csv,
    write_trajectory_csv,
)

NEU = Grid(1.0, 20, "neumann")


def _ode_reference(p, y0, T):
    sol = solve_ivp(lambda t, y: ode_rhs(*y, *pars_tuple(p)), (0, T), y0, method="DOP853",
                    rtol=1e-12, atol=1e-14)
    return sol.y[:, -1]


@pytest.mark.parametrize("name", ["PS-A", "PS-C", "PS-D"])
def test_constant_data_follows_ode(name):
    p = PRESETS[name]
    y0 = (0.8, 0.4, 0.3)
    traj = integrate(Problem(p, Grid(1.0, 4, "neumann")), y0, 2.0, 1e-4, sample_every=100)
    ref = _ode_reference(p, y0, 2.0)
    assert np.max(np.abs(traj.final - ref[:, None])) < 1e-4
    assert np.ptp(traj.final, axis=1).max() < 1e-13


def test_first_order_in_time():
    p = PRESETS["PS-A"]
    y0 = (0.8, 0.4, 0.3)
    ref = _ode_reference(p, y0, 1.0)
    g = Grid(1.0, 3, "neumann")
    errs = [np.max(np.abs(integrate(Problem(p, g), y0, 1.0, dt).final[:, 0] - ref)) for dt in (2e-3, 1e-3)]
    assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize("name", ["PS-A", "PS-B", "PS-C", "PS-D"])
def test_equilibria_are_fixed_points(name):
    p = PRESETS[name]
    for label, value in equilibria(p).existing().items():
        if min(value) <= 0:
            continue
        traj = integrate(Problem(p, NEU), value, 1.0, 1e-2)
        assert np.max(np.abs(traj.final - np.array(value)[:, None])) < 1e-12, label


@given(st.integers(1, 5000), st.sampled_from([1e-3, 1e-2, 0.1]), st.integers(1, 50))
def test_snapshot_schedule(nsteps, dt, k):
    s = snapshot_steps(nsteps, dt, k)
    assert s[0] == 0 and s[-1] == nsteps
    assert np.all(np.diff(s) > 0)
    assert np.all((s % k == 0) | (s == nsteps))
    early = np.arange(0, nsteps + 1, k)
    assert set(early[early * dt <= 1.0]) <= set(s)


def test_trajectory_shape_and_readonly():
    p = PRESETS["PS-A"]
    traj = integrate(Problem(p, NEU), (0.6, 0.4, 0.5), 3.0, 1e-2, sample_every=10)
    assert traj.snapshots.shape == (len(traj), 3, NEU.size)
    assert len(traj.monitor_table) == 300 // 10 + 1
    assert traj.times[-1] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        traj.snapshots[0, 0, 0] = 1.0
    assert isinstance(traj.state(), State)
    rec = traj.monitors()[0]
    assert rec.t == 0 and rec.V is None and rec.mass_W is not None


def test_forced_positivity_abort():
    p = PRESETS["PS-A"]
    init = (10.0, 10.0, 10.0)
    prob = Problem(p, NEU)
    dt = 100 * recommended_dt(prob, init)
    with pytest.raises(PositivityError) as info:
        integrate(prob, init, 50.0, dt)
    exc = info.value
    assert exc.trajectory is not None and not exc.trajectory.completed
    assert exc.field in ("S", "I", "P")
    assert exc.trajectory.times[-1] == pytest.approx(exc.t)


def test_input_validation():
    prob = Problem(PRESETS["PS-A"], NEU)
    with pytest.raises(InitialDataError):
        integrate(prob, (0.0, 1.0, 1.0), 1.0, 0.1)
    with pytest.raises(InitialDataError):
        integrate(prob, (1.0, 1.0), 1.0, 0.1)
    with pytest.raises(ParameterError):
        integrate(prob, (1.0, 1.0, 1.0), 0.01, 0.1)
    with pytest.raises(ParameterError):
        integrate(prob, (1.0, 1.0, 1.0), 1.0, 0.1, sample_every=0)
    with pytest.raises(GridError):
        Problem(PRESETS["PS-A"], NEU, bc="dirichlet")
    with pytest.raises(ParameterError):
        Problem(PRESETS["PS-A"], NEU, variant="prey_predator2")
    with pytest.raises(GridError):
        Problem(PreyPredatorParams(2, 1, 1, 1, 1), Grid(1.0, 5, "dirichlet"), variant="prey_predator2")


@pytest.mark.parametrize("name", ["PS-A", "PS-B", "PS-C", "PS-D"])
@pytest.mark.parametrize("D", [1.0, 0.3])
def test_monitors_respect_bounds(name, D):
    p = PRESETS[name].replace(D=D)
    g = Grid(2.0, 40, "neumann")
    shape = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
    init = (1.5 * shape, 0.8 * shape, 2.0 * shape)
    prob = Problem(p, g)
    traj = integrate(prob, init, 20.0, 1e-3, sample_every=50)
    check = check_monitors(prob, traj)
    assert check.ok, check.violations


def test_dirichlet_prey_stays_below_capacity():
    p = PRESETS["PS-A"].replace(a=6.0)
    g = Grid(math.pi, 60, "dirichlet")
    s = np.sin(g.x)
    prob = Problem(p, g)
    traj = integrate(prob, (s, s, s), 10.0, 1e-3, sample_every=100)
    assert check_monitors(prob, traj).ok


@pytest.mark.parametrize(
    "q,which",
    [((2, 1, 2, 1, 4), "V"), ((2, 1, 1, 1, 3), "V"), ((3, 2, 1, 0.5, 2), "F"), ((2, 2, 1, 0.5, 1), "F")],
)
def test_lyapunov_functional_decreases(q, which):
    q = PreyPredatorParams(*q)
    g = Grid(2.0, 40, "neumann")
    shape = 1 + 0.5 * np.cos(np.pi * g.x / g.length)
    prob = Problem(q, g, variant="prey_predator2")
    traj = integrate(prob, (1.5 * shape, 0.7 * shape), 10.0, 1e-4, sample_every=100)
    check = check_monitors(prob, traj)
    assert check.ok, check.violations
    col = traj.column(which)
    assert np.all(np.isfinite(col)) and col[-1] < col[0]
    u, v = traj.final
    fn = lyapunov_V if which == "V" else lyapunov_F
    assert fn(g, u, v, q) == pytest.approx(col[-1], rel=1e-12, abs=1e-14)


def test_prey_predator_limit():
    assert PreyPredatorParams(2, 1, 1, 1, 4).limit == (2.0, 0.0)
    q = PreyPredatorParams(3, 2, 1, 0.5, 2)
    assert q.limit == (2.0, 2.0)
    with pytest.raises(ParameterError):
        lyapunov_F(NEU, 1.0, 1.0, PreyPredatorParams(2, 1, 1, 1, 4))
    with pytest.raises(ParameterError):
        PreyPredatorParams(2, 1, 1, 1, 0)


def _fake_traj(distances):
    g = Grid(1.0, 3, "neumann")
    snaps = np.array([np.full((3, g.size), d) for d in distances])
    times = np.arange(len(distances), dtype=float)
    return Trajectory(g, ("S", "I", "P"), times, snaps, np.zeros((1, 9)), 1.0, 1)


def test_convergence_detection():
    rep = detect_convergence(_fake_traj([1.0, 0.5, 1e-4, 5e-5, 2e-5, 1e-5, 5e-6]), (0, 0, 0), 1e-3)
    assert rep.converged and rep.first_passage == 2.0 and rep.terminal_distance == 5e-6
    drift = detect_convergence(_fake_traj([1.0, 1e-5, 2e-5, 4e-5, 8e-5, 1.6e-4]), (0, 0, 0), 1e-3)
    assert not drift.converged
    far = detect_convergence(_fake_traj([1.0, 0.9, 0.8]), (0, 0, 0), 1e-3)
    assert not far.converged and far.first_passage is None
    flat = detect_convergence(_fake_traj([1e-13, 1e-13, 5e-13]), (0, 0, 0), 1e-3)
    assert flat.converged


def test_distance_series_shape_check():
    traj = _fake_traj([1.0, 0.5])
    assert np.allclose(sup_distance_series(traj, (0, 0, 0)), [1.0, 0.5])
    with pytest.raises(GridError):
        sup_distance_series(traj, (0, 0))


def test_csv_export(tmp_path):
    p = PRESETS["PS-B"]
    prob = Problem(p, NEU)
    traj = integrate(prob, (0.3, 0.2, 0.1), 2.0, 1e-2, sample_every=20)
    write_trajectory_csv(traj, tmp_path / "traj.csv")
    write_monitors_csv(traj, tmp_path / "mon.csv")
    rows = list(csv.reader(open(tmp_path / "traj.csv")))
    assert rows[0] == ["t", "x", "S", "I", "P"]
    assert len(rows) == 1 + len(traj) * NEU.size
    mon = list(csv.reader(open(tmp_path / "mon.csv")))
    assert tuple(mon[0]) == CSV_MONITOR_COLUMNS
    assert len(mon) == 1 + len(traj.monitor_table)
    assert mon[1][6] == "" and mon[1][7] == ""
    assert float(mon[-1][0]) == pytest.approx(2.0)
