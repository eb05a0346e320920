import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecoepi.eigen import lambda0, principal_eigenvalue
from ecoepi.errors import GridError, NewtonDivergence, ParameterError
from ecoepi.grid import Grid, apply_laplacian
from ecoepi.model import Parameters, classify_dirichlet
from ecoepi.steady import (
    FIELDS,
    SYSTEMS,
    LogisticSystem,
    ModelSystem,
    elliptic_residual,
    existence_conditions,
    logistic_newton,
    newton,
    random_positive_guesses,
    solve_direct,
    solve_full,
    solve_logistic,
    solve_prey_predator,
    solve_S_star,
    solve_SI,
    steady_report,
    uniqueness_probe,
)

COEX = Parameters(a=3, b=0.5, c=1, k=4, ell=1, theta=1.5, rho=1)


@pytest.fixture(scope="module")
def g():
    return Grid(math.pi, 100, "dirichlet")


def test_logistic_below_threshold_is_absent(g):
    assert solve_logistic(g, 1.0, 0.9, 1.0) is None


def test_logistic_above_threshold(g):
    u = solve_logistic(g, 1.0, 3.0, 2.0)
    assert u is not None and np.all(u > 0)
    r = -apply_laplacian(g, u) - (3.0 * u - 2.0 * u**2)
    assert np.max(np.abs(r)) < 1e-9
    assert u.max() < 3.0 / 2.0


def test_logistic_rejects_bad_crowding(g):
    with pytest.raises(ParameterError):
        solve_logistic(g, 1.0, 3.0, 0.0)


@given(st.floats(1.2, 10.0), st.floats(0.2, 5.0))
def test_s_star_bounded_by_constant_state(a_minus_b, c):
    g = Grid(math.pi, 60, "dirichlet")
    p = Parameters(a=a_minus_b + 0.5, b=0.5, c=c, k=1, ell=1, theta=1, rho=1)
    s = solve_S_star(g, p)
    assert s is not None
    assert np.all(s > 0) and s.max() < a_minus_b / c


def test_s_star_decreases_with_diffusion(g):
    p = Parameters(a=4, b=0.5, c=1, k=1, ell=1, theta=1, rho=1)
    s = [solve_S_star(g, p.replace(d=d)) for d in (0.5, 1.0, 2.0)]
    assert np.all(s[0] >= s[1] - 1e-12) and np.all(s[1] >= s[2] - 1e-12)
    assert solve_S_star(g, p.replace(d=4.0)) is None


def test_si_absent_when_k_not_above_c(g):
    assert solve_SI(g, COEX.replace(k=0.8)) is None


def test_si_identity(g):
    p = COEX.replace(k=3.0, theta=0.2)
    S, I = solve_SI(g, p)
    assert np.max(np.abs(S + I - solve_S_star(g, p))) < 1e-12
    assert elliptic_residual(g, p, S=S, I=I) < 1e-9
    rep = steady_report(g, p, "SI")
    assert rep.exists and rep.exists_predicted
    assert rep.identities["sum_minus_S_star"] < 1e-12


def test_prey_predator_lowers_prey(g):
    S_hat, P_hat = solve_prey_predator(g, COEX)
    s_star = solve_S_star(g, COEX)
    assert np.all(S_hat < s_star) and np.all(P_hat > 0)
    assert elliptic_residual(g, COEX, S=S_hat, P=P_hat) < 1e-9


def test_prey_predator_absent_without_invasion(g):
    p = COEX.replace(theta=0.2)
    assert existence_conditions(g, p).lam_predator > 0
    assert solve_prey_predator(g, p) is None


def test_full_state_identities(g):
    rep = solve_full(g, COEX)
    assert rep.exists and rep.exists_predicted
    assert rep.residual < 1e-9
    assert max(rep.identities.values()) < 1e-12
    S_hat, P_hat = solve_prey_predator(g, COEX)
    assert np.max(np.abs(rep.solution["S"] + rep.solution["I"] - S_hat)) < 1e-12
    assert all(np.all(rep.solution[f] > 0) for f in FIELDS)


def test_full_absent_cases(g):
    assert not solve_full(g, COEX.replace(a=1.2)).exists
    assert not solve_full(g, COEX.replace(theta=0.2)).exists
    assert not solve_full(g, COEX.replace(k=0.5)).exists


def test_full_rejects_general_rates(g):
    with pytest.raises(ParameterError):
        solve_full(g, COEX.replace(gamma=2.0))


def test_report_serialises(g):
    d = steady_report(g, COEX, "Sstar").to_dict()
    assert set(d) == {"target", "exists_predicted", "exists", "eigenvalues", "residual",
                      "newton_iterations", "identities"}
    with pytest.raises(ValueError):
        steady_report(g, COEX, "nope")


def test_bundle_consistent_with_direct_eigenvalues(g):
    b = existence_conditions(g, COEX)
    assert b.lam0_d == pytest.approx(lambda0(g, 1.0), rel=1e-14)
    assert b.lam_b_minus_a == pytest.approx(b.lam0_d + COEX.b - COEX.a)
    s = solve_S_star(g, COEX)
    assert b.lam_predator == pytest.approx(principal_eigenvalue(g, 1.0, COEX.rho - COEX.theta * s).lam)
    assert b.lam_full is not None and b.lam_full < 0
    assert classify_dirichlet(COEX, b).attractor == "unresolved"


def test_banded_jacobian_matches_finite_differences():
    g = Grid(1.0, 7, "dirichlet")
    p = Parameters(a=3, b=0.5, c=1, k=2, ell=1.5, theta=2, rho=1, d=0.7, D=1.3)
    system = ModelSystem(g, p, SYSTEMS["full"])
    rng = np.random.default_rng(3)
    u = rng.uniform(0.1, 1.0, (3, g.n))
    ab = system.banded_jacobian(u)
    m, N = 3, 3 * g.n
    dense = np.zeros((N, N))
    for col in range(N):
        for row in range(max(0, col - m), min(N, col + m + 1)):
            dense[row, col] = ab[m + row - col, col]
    h = 1e-6
    for col in range(N):
        e = np.zeros(N)
        e[col] = h
        E = e.reshape(g.n, m).T
        fd = (system.residual(u + E) - system.residual(u - E)).T.reshape(-1) / (2 * h)
        assert np.max(np.abs(fd - dense[:, col])) < 1e-6 * max(1.0, np.max(np.abs(dense)))


def test_newton_requires_dirichlet():
    with pytest.raises(GridError):
        LogisticSystem(Grid(1.0, 10, "neumann"), 1.0, 1.0, 1.0)


def test_newton_divergence_reported(g):
    system = LogisticSystem(g, 1.0, 3.0, 1.0)
    with pytest.raises(NewtonDivergence):
        newton(system, np.full((1, g.n), 1e3), max_iter=1)


def test_logistic_newton_reports_eigenvalue(g):
    res, lam = logistic_newton(g, 1.0, 3.0, 1.0)
    assert lam == pytest.approx(lambda0(g, 1.0) - 3.0)
    assert res.residual < 1e-9


def test_direct_solve_recovers_decomposed_state(g):
    rep = solve_full(g, COEX)
    guess = random_positive_guesses(g, COEX, "full", 1, seed=4)[0]
    res = solve_direct(g, COEX, "full", guess)
    ref = np.stack([rep.solution[f] for f in FIELDS])
    assert np.max(np.abs(res.u - ref)) < 1e-7


def test_uniqueness_probe(g):
    probe = uniqueness_probe(g, COEX, "full", starts=3, seed=1)
    assert probe.agree and probe.spread <= 1e-7


def test_random_guesses_positive_and_reproducible(g):
    a = random_positive_guesses(g, COEX, "preypred", 3, seed=9)
    b = random_positive_guesses(g, COEX, "preypred", 3, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (2, g.n) and np.all(x > 0) for x in a)


@pytest.mark.parametrize("a", [1.2, 2.0, 3.0])
@pytest.mark.parametrize("theta", [0.3, 1.5])
@pytest.mark.parametrize("k", [0.5, 4.0])
def test_existence_matches_prediction(g, a, theta, k):
    p = COEX.replace(a=a, theta=theta, k=k)
    for target in ("Sstar", "SI", "preypred", "full"):
        rep = steady_report(g, p, target)
        assert rep.exists == rep.exists_predicted, target
