"""Positive steady states on a Dirichlet interval.

The coupled problems are reduced to scalar logistic problems wherever the
structure allows it:

* ``S*`` solves ``-d u'' = (a-b) u - c u^2``;
* the predator-free state has ``S~ + I~ = S*`` and ``I~`` is logistic with
  growth ``(k-c) S* - b`` and crowding ``k``;
* the positive state of the full system has ``S + I = S^`` and ``P = P^``,
  with ``(S^, P^)`` the prey-predator state, and ``I`` logistic with growth
  ``(k-c) S^ - b - ell P^`` and crowding ``k``.

Every solver predicts existence first from principal-eigenvalue signs and
only then runs Newton. Newton uses analytic banded Jacobians on the
interleaved unknown vector ``z[i*m + j] = field_j(x_i)``.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .eigen import lambda0, principal_eigenvalue
from .errors import GridError, InconsistencyError, NewtonDivergence, ParameterError
from .grid import BC, Grid, apply_laplacian, laplacian_bands
from .model import EigenBundle, Parameters, State, reaction_jacobian, reaction_terms
from .rng import SplitMix64

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
FINE_TOL = 1e-12
MAX_NEWTON = 50
MAX_HALVINGS = 30
POSITIVE_RTOL = 1e-12
CONTINUATION_STEPS = 8
PTC_TAU0 = 0.1
PTC_TAU_MAX = 1.0
PTC_SWITCH = 1e-3
PTC_MAX_ITER = 5000

FIELDS = ("S", "I", "P")


# -- generic damped Newton ---------------------------------------------------


@dataclass
class NewtonResult:
    u: np.ndarray
    """Fields, shape (m, n)."""
    residual: float
    iterations: int


class EllipticSystem:
    """``-D_j u_j'' = f_j(u)`` for ``m`` fields with Dirichlet boundaries."""

    def __init__(self, grid: Grid, diffusivities: Sequence[float]):
        if grid.bc is not BC.DIRICHLET:
            raise GridError("steady-state solvers work on Dirichlet grids")
        self.grid = grid
        self.diff = np.asarray(diffusivities, dtype=float)
        self.m = len(self.diff)

    def reaction(self, u):
        raise NotImplementedError

    def reaction_jacobian(self, u):
        """Array of shape (m, m, n) with ``J[i, j] = d f_i / d u_j``."""
        raise NotImplementedError

    def residual(self, u) -> np.ndarray:
        f = self.reaction(u)
        return np.stack(
            [-self.diff[j] * apply_laplacian(self.grid, u[j]) - f[j] for j in range(self.m)]
        )

    def banded_jacobian(self, u) -> np.ndarray:
        """Jacobian of :meth:`residual` in LAPACK band storage, (m, m) bands."""
        m, n = self.m, self.grid.n
        N = m * n
        ab = np.zeros((2 * m + 1, N))
        lower, diag, upper = laplacian_bands(self.grid)
        J = self.reaction_jacobian(u)
        rows = np.arange(n) * m
        for j in range(m):
            col = rows + j
            # diffusion: (i, j) couples to (i +- 1, j), offset +-m
            ab[m, col] += -self.diff[j] * diag
            ab[0, col[1:]] = -self.diff[j] * upper[:-1]
            ab[2 * m, col[:-1]] = -self.diff[j] * lower[1:]
            for i in range(m):
                # entry A[row_i, col_j] sits at ab[m + row - col, col]
                ab[m + i - j, col] += -J[i, j]
        return ab


def _sup(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _solve_step(system: EllipticSystem, u, F, shift: float = 0.0):
    ab = system.banded_jacobian(u)
    if shift:
        ab[system.m] += shift
    rhs = -F.T.reshape(-1)
    try:
        return solve_banded((system.m, system.m), ab, rhs).reshape(system.grid.n, system.m).T
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NewtonDivergence("singular Jacobian") from exc


def _pseudo_transient(system: EllipticSystem, u, F, nF, keep_positive: bool):
    """Backward-Euler pseudo-time steps ``(I/tau + J) du = -F`` with ``tau``
    grown by residual ratio but capped at PTC_TAU_MAX, until the residual
    drops below PTC_SWITCH. Following the flow (instead of jumping with full
    Newton) keeps invading species from collapsing onto semi-trivial states."""
    tau = PTC_TAU0
    for _ in range(PTC_MAX_ITER):
        if nF < PTC_SWITCH:
            return u, F, nF
        du = _solve_step(system, u, F, 1.0 / tau)
        step = 1.0
        while keep_positive and np.any(u + step * du <= 0):
            step *= 0.5
        u = u + step * du
        F_new = system.residual(u)
        nF_new = _sup(F_new)
        if not np.isfinite(nF_new):
            raise NewtonDivergence("pseudo-transient continuation blew up")
        tau = min(tau * max(nF / nF_new, 0.5), PTC_TAU_MAX)
        F, nF = F_new, nF_new
    raise NewtonDivergence(f"pseudo-transient phase did not settle in {PTC_MAX_ITER} steps")


def newton(
    system: EllipticSystem,
    u0,
    *,
    keep_positive: bool = False,
    pseudo_transient: bool = False,
    max_iter: int = MAX_NEWTON,
) -> NewtonResult:
    """Damped Newton: each step is halved (up to 30 times) until the sup-norm
    residual decreases. Declares divergence after ``max_iter`` steps.

    ``pseudo_transient=True`` prefixes a pseudo-time phase for poor starting
    guesses; ``keep_positive`` rejects steps that leave the positive cone.
    """
    u = np.array(u0, dtype=float).reshape(system.m, system.grid.n)
    F = system.residual(u)
    nF = _sup(F)
    if pseudo_transient:
        u, F, nF = _pseudo_transient(system, u, F, nF, keep_positive)
    it = 0
    while True:
        if nF <= FINE_TOL:
            break
        if it >= max_iter:
            if nF <= RESIDUAL_TOL:
                break
            raise NewtonDivergence(f"Newton failed to converge in {max_iter} steps (residual {nF:.3e})")
        it += 1
        du = _solve_step(system, u, F)
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = u + step * du
            if not (keep_positive and np.any(trial <= 0)):
                Ft = system.residual(trial)
                nFt = _sup(Ft)
                if np.isfinite(nFt) and nFt < nF:
                    break
            step *= 0.5
        else:
            if nF <= RESIDUAL_TOL:
                # stagnation at the rounding floor
                break
            raise NewtonDivergence(
                f"no decrease after {MAX_HALVINGS} step halvings at Newton step {it} "
                f"(residual {nF:.3e})"
            )
        u, F, nF = trial, Ft, nFt
    return NewtonResult(u, nF, it)


class LogisticSystem(EllipticSystem):
    """``-d u'' = r(x) u - kappa u^2``."""

    def __init__(self, grid, d, r, kappa):
        super().__init__(grid, [d])
        self.r = grid.field(r)
        self.kappa = float(kappa)

    def reaction(self, u):
        return (self.r * u[0] - self.kappa * u[0] ** 2)[None]

    def reaction_jacobian(self, u):
        return (self.r - 2 * self.kappa * u[0])[None, None]


class ModelSystem(EllipticSystem):
    """Steady states of the model restricted to a subset of species; the
    other species are held at zero."""

    def __init__(self, grid, p: Parameters, active: Sequence[str]):
        self.p = p
        self.active = tuple(active)
        self.idx = [FIELDS.index(name) for name in self.active]
        super().__init__(grid, [p.D if name == "P" else p.d for name in self.active])

    def _full(self, u):
        full = np.zeros((3, self.grid.n))
        full[self.idx] = u
        return full

    def reaction(self, u):
        f = reaction_terms(*self._full(u), self.p)
        return np.stack([f[i] for i in self.idx])

    def reaction_jacobian(self, u):
        J = reaction_jacobian(*self._full(u), self.p)
        n = self.grid.n
        return np.array([[np.broadcast_to(J[i][j], (n,)) for j in self.idx] for i in self.idx])


SYSTEMS = {
    "Sstar": ("S",),
    "SI": ("S", "I"),
    "preypred": ("S", "P"),
    "full": ("S", "I", "P"),
}


def is_positive(u, scale: float = 1.0) -> bool:
    """Positive solution test: interior minimum above ``1e-12 * max`` and the
    maximum clearly away from the zero branch."""
    u = np.asarray(u)
    top = float(np.max(u))
    return top > 1e-8 * scale and float(np.min(u)) > POSITIVE_RTOL * top


# -- independent residual ----------------------------------------------------


def elliptic_residual(g: Grid, p: Parameters, S=None, I=None, P=None) -> float:
    """Sup-norm residual of the steady equations, absent species set to zero.

    Only equations of the species that are present are checked.
    """
    zero = np.zeros(g.size)
    present = [x is not None for x in (S, I, P)]
    S, I, P = (zero if x is None else g.check(x) for x in (S, I, P))
    f = reaction_terms(S, I, P, p)
    res = [
        -p.d * apply_laplacian(g, S) - f[0],
        -p.d * apply_laplacian(g, I) - f[1],
        -p.D * apply_laplacian(g, P) - f[2],
    ]
    return max(_sup(r) for r, on in zip(res, present) if on)


# -- scalar logistic ---------------------------------------------------------


def logistic_newton(g: Grid, d: float, r, kappa: float, eig=None) -> tuple:
    """Newton for the logistic problem from the eigenfunction-based guess.

    Returns ``(NewtonResult, lambda_1^d(-r))``; no existence gating.
    """
    if not kappa > 0:
        raise ParameterError("crowding coefficient kappa must be positive")
    r = g.field(r)
    if eig is None:
        eig = principal_eigenvalue(g, d, -r)
    scale = max(float(np.max(np.abs(r))), 1e-300) / kappa
    floor = 1e-6 * scale
    u0 = np.maximum(eig.phi * (-eig.lam) / kappa, floor)
    res = newton(LogisticSystem(g, d, r, kappa), u0[None])
    return res, eig.lam


def solve_logistic(g: Grid, d: float, r, kappa: float, *, predict: bool = True) -> Optional[np.ndarray]:
    """Positive solution of ``-d u'' = r u - kappa u^2``, ``u = 0`` on the
    boundary, or ``None`` when there is none.

    A positive solution exists iff ``lambda_1^d(-r) < 0``. With
    ``predict=False`` Newton runs regardless and existence is read off the
    computed solution, which is how the eigenvalue criterion is checked.

    Raises
    ------
    NewtonDivergence
        Newton failed although a solution was predicted.
    """
    if not kappa > 0:
        raise ParameterError("crowding coefficient kappa must be positive")
    r = g.field(r)
    eig = principal_eigenvalue(g, d, -r)
    if predict and eig.lam >= 0:
        return None
    res, _ = logistic_newton(g, d, r, kappa, eig=eig)
    u = res.u[0]
    scale = max(float(np.max(np.abs(r))), 1e-300) / kappa
    return u if is_positive(u, scale) else None


# -- cached building blocks --------------------------------------------------


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=256)
def _s_star(g: Grid, a_minus_b: float, c: float, d: float):
    u = solve_logistic(g, d, a_minus_b, c)
    return None if u is None else _frozen(u)


@functools.lru_cache(maxsize=256)
def _lam0(g: Grid, d: float) -> float:
    return lambda0(g, d)


def solve_S_star(g: Grid, p: Parameters) -> Optional[np.ndarray]:
    """Positive solution of the single-prey logistic problem, if ``a - b > lambda_0^d``."""
    return _s_star(g, p.a - p.b, p.c, p.d)


def solve_SI(g: Grid, p: Parameters) -> Optional[tuple]:
    """Predator-free positive steady state ``(S~, I~)`` or ``None``."""
    s_star = solve_S_star(g, p)
    if s_star is None:
        return None
    if p.k <= p.c:
        return None
    r = (p.k - p.c) * s_star - p.b
    I = solve_logistic(g, p.d, r, p.k)
    if I is None:
        return None
    S = s_star - I
    if not is_positive(S):
        raise InconsistencyError("S~ = S* - I~ is not positive, contradicting uniqueness")
    res = elliptic_residual(g, p, S=S, I=I)
    if res > RESIDUAL_TOL:
        raise InconsistencyError(f"predator-free state residual {res:.3e} exceeds tolerance")
    return S, I


def _theta_critical(g: Grid, p: Parameters, s_star) -> float:
    """Predator invasion threshold: ``lambda_1^D(rho - theta S*) = 0``."""

    def lam(theta):
        return principal_eigenvalue(g, p.D, p.rho - theta * s_star).lam

    hi = p.theta
    while lam(hi) >= 0:
        hi *= 2
    return brentq(lam, 0.0, hi, xtol=1e-14, rtol=1e-13)


def _bifurcation_guess(g: Grid, p: Parameters, s_star, theta_c: float, theta: float):
    """First-order approximation of the positive branch emerging from
    ``(S*, 0)`` at ``theta_c``: ``(S* + s psi, s phi)`` with ``phi`` the
    predator eigenfunction, ``psi`` the prey response to unit predation and
    the amplitude ``s`` fixed by the second-order solvability condition."""
    phi = principal_eigenvalue(g, p.D, p.rho - theta_c * s_star).phi
    linear_S = LogisticSystem(g, p.d, p.a - p.b, p.c).banded_jacobian(s_star[None])
    psi = solve_banded((1, 1), linear_S, -p.ell * s_star * phi)
    w = g.weights
    s = -(theta - theta_c) * np.dot(w, s_star * phi**2) / (theta_c * np.dot(w, psi * phi**2))
    return np.stack([np.maximum(s_star + s * psi, 1e-3 * s_star), s * phi])


def _preypred_newton(g: Grid, p: Parameters, s_star, guess=None) -> NewtonResult:
    system = ModelSystem(g, p, SYSTEMS["preypred"])
    if guess is None:
        eig = principal_eigenvalue(g, p.D, p.rho - p.theta * s_star)
        eps = 0.1 * float(np.max(s_star))
        guess = np.stack([s_star, eig.phi * eps])
    res = newton(system, guess, keep_positive=True)
    if not all(is_positive(f) for f in res.u):
        raise NewtonDivergence("prey-predator Newton collapsed onto the predator-free branch")
    return res


@functools.lru_cache(maxsize=256)
def _prey_predator(g: Grid, p: Parameters):
    s_star = solve_S_star(g, p)
    if s_star is None:
        return None
    lam_pred = principal_eigenvalue(g, p.D, p.rho - p.theta * s_star).lam
    if lam_pred >= 0:
        return None
    try:
        res = _preypred_newton(g, p, s_star)
    except NewtonDivergence:
        log.info("prey-predator Newton failed, continuing in theta from the invasion threshold")
        theta_c = _theta_critical(g, p, s_star)
        theta_1 = theta_c + (p.theta - theta_c) / CONTINUATION_STEPS
        guess = _bifurcation_guess(g, p, s_star, theta_c, theta_1)
        for j in range(1, CONTINUATION_STEPS + 1):
            theta_j = theta_c + (p.theta - theta_c) * j / CONTINUATION_STEPS
            res = _preypred_newton(g, p.replace(theta=theta_j), s_star, guess)
            guess = res.u
    S, P = res.u
    return _frozen(S), _frozen(P), res.iterations


def solve_prey_predator(g: Grid, p: Parameters) -> Optional[tuple]:
    """Positive ``(S^, P^)`` of the infection-free prey-predator problem or ``None``.

    Exists iff ``a - b > lambda_0^d`` and ``lambda_1^D(rho - theta S*) < 0``.
    """
    out = _prey_predator(g, p)
    return None if out is None else out[:2]


# -- full system and reports -------------------------------------------------


@dataclass
class SteadyReport:
    target: str
    exists_predicted: bool
    eigenvalues: dict
    solution: Optional[dict] = None
    """Component name -> nodal values (only the components of the target)."""
    residual: Optional[float] = None
    newton_iterations: int = 0
    identities: dict = field(default_factory=dict)

    @property
    def exists(self) -> bool:
        return self.solution is not None

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "exists_predicted": self.exists_predicted,
            "exists": self.exists,
            "eigenvalues": self.eigenvalues,
            "residual": self.residual,
            "newton_iterations": self.newton_iterations,
            "identities": self.identities,
        }


def existence_conditions(g: Grid, p: Parameters, *, include_full: bool = True) -> EigenBundle:
    """Principal eigenvalues that decide existence and stability.

    ``lam_b_minus_a`` is ``lambda_0^d + b - a`` (constant shift). Entries
    that depend on ``S*`` or ``(S^, P^)`` are ``None`` when those do not exist.
    """
    lam0_d = _lam0(g, p.d)
    lam0_D = _lam0(g, p.D)
    bundle = EigenBundle(lam0_d, lam0_D, lam0_d + p.b - p.a)
    s_star = solve_S_star(g, p)
    if s_star is None:
        return bundle
    bundle.lam_infection = principal_eigenvalue(g, p.d, p.b - (p.k - p.c) * s_star).lam
    bundle.lam_predator = principal_eigenvalue(g, p.D, p.rho - p.theta * s_star).lam
    if include_full:
        pp = solve_prey_predator(g, p)
        if pp is not None:
            S_hat, P_hat = pp
            bundle.lam_full = principal_eigenvalue(
                g, p.d, p.b - (p.k - p.c) * S_hat + p.ell * P_hat
            ).lam
    return bundle


def solve_full(g: Grid, p: Parameters) -> SteadyReport:
    """Positive steady state of the three-species problem via ``S + I = S^``, ``P = P^``."""
    if not p.special_case:
        raise ParameterError("the full steady problem is solved for gamma == ell, sigma == theta")
    bundle = existence_conditions(g, p)
    predicted = (
        bundle.lam_b_minus_a < 0
        and bundle.lam_predator is not None
        and bundle.lam_predator < 0
        and bundle.lam_full is not None
        and bundle.lam_full < 0
    )
    report = SteadyReport("full", predicted, bundle.to_dict())
    if not predicted:
        return report
    S_hat, P_hat, iters = _prey_predator(g, p)
    r = (p.k - p.c) * S_hat - p.b - p.ell * P_hat
    I = solve_logistic(g, p.d, r, p.k)
    if I is None:
        raise InconsistencyError("infected class vanished although lambda_1^d(b-(k-c)S^+ell P^) < 0")
    S = S_hat - I
    if not is_positive(S):
        raise InconsistencyError("S = S^ - I is not positive")
    P = np.array(P_hat)
    report.solution = {"S": S, "I": I, "P": P}
    report.residual = elliptic_residual(g, p, S=S, I=I, P=P)
    report.newton_iterations = iters
    report.identities = {
        "sum_prey_minus_S_hat": _sup(S + I - S_hat),
        "P_minus_P_hat": _sup(P - P_hat),
    }
    if report.residual > RESIDUAL_TOL:
        raise InconsistencyError(f"full steady-state residual {report.residual:.3e} exceeds tolerance")
    return report


def steady_report(g: Grid, p: Parameters, target: str) -> SteadyReport:
    """Report for one of the targets ``Sstar``, ``SI``, ``preypred`` or ``full``."""
    if target == "full":
        return solve_full(g, p)
    bundle = existence_conditions(g, p, include_full=False)
    eig = bundle.to_dict()
    if target == "Sstar":
        predicted = bundle.lam_b_minus_a < 0
        sol = solve_S_star(g, p)
        comps = None if sol is None else {"S": np.array(sol)}
    elif target == "SI":
        predicted = (
            bundle.lam_b_minus_a < 0 and bundle.lam_infection is not None and bundle.lam_infection < 0
        )
        sol = solve_SI(g, p)
        comps = None if sol is None else {"S": sol[0], "I": sol[1]}
    elif target == "preypred":
        predicted = (
            bundle.lam_b_minus_a < 0 and bundle.lam_predator is not None and bundle.lam_predator < 0
        )
        sol = solve_prey_predator(g, p)
        comps = None if sol is None else {"S": np.array(sol[0]), "P": np.array(sol[1])}
    else:
        raise ValueError(f"unknown steady target {target!r}")
    report = SteadyReport(target, predicted, eig, comps)
    if comps is not None:
        report.residual = elliptic_residual(g, p, **comps)
        if target == "SI":
            report.identities = {"sum_minus_S_star": _sup(comps["S"] + comps["I"] - solve_S_star(g, p))}
    return report


# -- direct coupled solves and uniqueness probes -----------------------------


def solve_direct(g: Grid, p: Parameters, system: str, guess) -> NewtonResult:
    """Coupled Newton on one of the systems in :data:`SYSTEMS` from ``guess``
    (shape ``(m, n)``), without any decomposition."""
    return newton(ModelSystem(g, p, SYSTEMS[system]), guess, keep_positive=True, pseudo_transient=True)


def random_positive_guesses(g: Grid, p: Parameters, system: str, count: int, seed: int = 0):
    """Randomised positive starting fields built from the a-priori bounds only.

    Each field is ``A * sin(pi x / l)^e + noise`` with amplitude ``A`` drawn in
    [0.2, 1] times the bound for that species, exponent ``e`` in [0.5, 2] and
    a small positive nodal noise.
    """
    rng = SplitMix64(seed)
    prey_cap = (p.a - p.b) / p.c
    pred_cap = p.theta * (p.a - p.b) / (p.c * p.D * p.ell) + p.theta * (p.a - p.b) ** 2 / (
        4 * p.c * p.ell * p.rho
    )
    caps = {"S": prey_cap, "I": prey_cap, "P": pred_cap}
    base = np.sin(np.pi * g.x / g.length)
    guesses = []
    for _ in range(count):
        fields = []
        for name in SYSTEMS[system]:
            amp = caps[name] * rng.uniform(0.2, 1.0)
            expo = rng.uniform(0.5, 2.0)
            noise = np.array([rng.uniform(0.0, 0.02) for _ in range(g.n)]) * base
            fields.append(amp * base**expo + amp * noise)
        guesses.append(np.stack(fields))
    return guesses


@dataclass
class UniquenessProbe:
    system: str
    solutions: list
    failures: list
    spread: float
    """Largest sup-norm distance between any converged positive solution and the first."""

    @property
    def agree(self) -> bool:
        return not self.failures and len(self.solutions) > 1


def uniqueness_probe(g: Grid, p: Parameters, system: str = "full", starts: int = 5, seed: int = 0) -> UniquenessProbe:
    """Multi-start coupled Newton; a unique positive solution means every start
    converges to the same positive state."""
    solutions, failures = [], []
    for k, guess in enumerate(random_positive_guesses(g, p, system, starts, seed)):
        try:
            res = solve_direct(g, p, system, guess)
        except NewtonDivergence as exc:
            failures.append((k, str(exc)))
            continue
        if all(is_positive(f) for f in res.u):
            solutions.append(res.u)
        else:
            failures.append((k, "converged to a non-positive state"))
    spread = max((_sup(s - solutions[0]) for s in solutions), default=0.0)
    return UniquenessProbe(system, solutions, failures, spread)
