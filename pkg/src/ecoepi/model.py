"""Parameters, reaction terms, constant equilibria and regime classifiers.

Species: susceptible prey ``S``, infected prey ``I`` and predator ``P``::

    S_t - d S_xx = a(S+I) - bS - c(S+I)S - kIS - ell*S*P
    I_t - d I_xx = kIS - bI - c(S+I)I - gamma*I*P
    P_t - D P_xx = theta*S*P + sigma*I*P - rho*P

Both prey classes diffuse with ``d``. The long-time results that drive the
classifiers hold only when ``(gamma, sigma) == (ell, theta)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError

SPECIAL_CASE_RTOL = 1e-12
EQUALITY_RTOL = 1e-9

ATTRACTORS = (
    "E0",
    "E1",
    "EI",
    "EP",
    "Estar",
    "extinction",
    "Sstar00",
    "StildeItilde0",
    "unresolved",
)


@dataclass(frozen=True)
class Parameters:
    a: float
    b: float
    c: float
    k: float
    ell: float
    theta: float
    rho: float
    d: float = 1.0
    D: float = 1.0
    gamma: Optional[float] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.ell)
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.theta)
        for name, value in asdict(self).items():
            value = float(value)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(f"parameter {name} must be finite and positive, got {value}")
            object.__setattr__(self, name, value)
        if not self.a > self.b:
            raise ParameterError(f"prey birth rate must exceed death rate (a={self.a}, b={self.b})")

    @property
    def special_case(self) -> bool:
        return _close(self.gamma, self.ell, SPECIAL_CASE_RTOL) and _close(
            self.sigma, self.theta, SPECIAL_CASE_RTOL
        )

    def replace(self, **changes) -> "Parameters":
        values = asdict(self)
        # keep the special case coupled when only ell/theta are swept
        if "ell" in changes and "gamma" not in changes and self.gamma == self.ell:
            values["gamma"] = None
        if "theta" in changes and "sigma" not in changes and self.sigma == self.theta:
            values["sigma"] = None
        values.update(changes)
        return Parameters(**values)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.a, self.b, self.c, self.k, self.ell, self.gamma, self.theta, self.sigma, self.rho]
        )

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "PS-A": Parameters(a=2.0, b=0.5, c=1.0, k=4.0, ell=1.0, theta=1.0, rho=1.0),
    "PS-B": Parameters(a=1.2, b=1.0, c=1.0, k=1.5, ell=1.0, theta=1.0, rho=1.0),
    "PS-C": Parameters(a=3.0, b=0.5, c=1.0, k=2.0, ell=1.0, theta=1.0, rho=1.0),
    "PS-D": Parameters(a=2.0, b=0.5, c=1.0, k=3.0, ell=1.0, theta=1.0, rho=2.0),
}


@dataclass
class State:
    """Nodal values of (S, I, P) on a common grid."""

    S: np.ndarray
    I: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        self.I = np.asarray(self.I, dtype=float)
        self.P = np.asarray(self.P, dtype=float)

    @classmethod
    def constant(cls, grid, triple) -> "State":
        return cls(*(grid.field(v) for v in triple))

    @classmethod
    def from_array(cls, arr) -> "State":
        return cls(arr[0].copy(), arr[1].copy(), arr[2].copy())

    def stack(self) -> np.ndarray:
        return np.stack([self.S, self.I, self.P])

    def sup_distance(self, other: "State") -> float:
        return float(np.max(np.abs(self.stack() - other.stack())))


def reaction_terms(S, I, P, p: Parameters):
    """Local reaction rates ``(f1, f2, f3)``; works on scalars or arrays."""
    u = S + I
    f1 = p.a * u - p.b * S - p.c * u * S - p.k * I * S - p.ell * S * P
    f2 = p.k * I * S - p.b * I - p.c * u * I - p.gamma * I * P
    f3 = p.theta * S * P + p.sigma * I * P - p.rho * P
    return f1, f2, f3


def reaction_jacobian(S, I, P, p: Parameters):
    """Partial derivatives of the reaction terms, as a 3x3 nested tuple
    ``J[i][j] = d f_i / d u_j`` with ``u = (S, I, P)``."""
    zero = 0.0 * S
    return (
        (
            p.a - p.b - 2 * p.c * S - (p.c + p.k) * I - p.ell * P,
            p.a - (p.c + p.k) * S,
            -p.ell * S,
        ),
        (
            (p.k - p.c) * I + zero,
            (p.k - p.c) * S - p.b - 2 * p.c * I - p.gamma * P,
            -p.gamma * I,
        ),
        (p.theta * P, p.sigma * P, p.theta * S + p.sigma * I - p.rho),
    )


@dataclass
class Equilibrium:
    name: str
    exists: bool
    value: Optional[tuple]
    condition: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "exists": self.exists,
            "value": list(self.value) if self.value is not None else None,
            "condition": self.condition,
        }


@dataclass
class EquilibriumSet:
    E0: Equilibrium
    E1: Equilibrium
    EI: Equilibrium
    EP: Equilibrium
    Estar: Equilibrium

    def __iter__(self):
        return iter((self.E0, self.E1, self.EI, self.EP, self.Estar))

    def __getitem__(self, name) -> Equilibrium:
        return getattr(self, name)

    def existing(self) -> dict:
        return {e.name: e.value for e in self if e.exists}


def equilibria(p: Parameters) -> EquilibriumSet:
    """Closed-form constant equilibria of the special-case Neumann system."""
    a, b, c, k, ell, theta, rho = p.a, p.b, p.c, p.k, p.ell, p.theta, p.rho
    thr_I = b + c * rho / theta
    e0 = Equilibrium("E0", True, (0.0, 0.0, 0.0), "always")
    e1 = Equilibrium("E1", True, ((a - b) / c, 0.0, 0.0), "always")

    ei_exists = a > thr_I
    ei = Equilibrium(
        "EI",
        ei_exists,
        (rho / theta, 0.0, (a - b - c * rho / theta) / ell) if ei_exists else None,
        "a > b + c*rho/theta",
    )
    ep_exists = k > c and a > b * k / (k - c)
    ep = Equilibrium(
        "EP",
        ep_exists,
        (a / k, (a * (k - c) - b * k) / (k * c), 0.0) if ep_exists else None,
        "k > c and a > b*k/(k-c)",
    )
    es_exists = thr_I < a < k * rho / theta
    es = Equilibrium(
        "Estar",
        es_exists,
        (a / k, (k * rho - a * theta) / (k * theta), (a - b - c * rho / theta) / ell)
        if es_exists
        else None,
        "b + c*rho/theta < a < k*rho/theta",
    )
    return EquilibriumSet(e0, e1, ei, ep, es)


@dataclass
class RegimePrediction:
    attractor: str
    justification: str
    boundary_case: bool = False
    margin: float = math.inf
    """Smallest relative distance to any threshold that enters the decision."""

    def to_dict(self) -> dict:
        return {
            "attractor": self.attractor,
            "justification": self.justification,
            "boundary_case": self.boundary_case,
            "margin": self.margin if math.isfinite(self.margin) else None,
        }


def _close(x, y, rtol):
    return abs(x - y) <= rtol * max(abs(x), abs(y), 1e-300)


def _rel_gap(x, thr):
    return abs(x - thr) / max(abs(thr), 1e-300)


def _require_special_case(p: Parameters):
    if not p.special_case:
        raise ParameterError(
            "stability classification needs gamma == ell and sigma == theta "
            f"(got gamma={p.gamma}, ell={p.ell}, sigma={p.sigma}, theta={p.theta})"
        )


def neumann_thresholds(p: Parameters) -> dict:
    """Threshold values of ``a`` that separate the Neumann regimes."""
    out = {"a_EI": p.b + p.c * p.rho / p.theta, "a_Estar": p.k * p.rho / p.theta}
    if p.k > p.c:
        out["a_EP"] = p.b * p.k / (p.k - p.c)
    return out


def classify_neumann(p: Parameters) -> RegimePrediction:
    """Predicted global attractor of the zero-flux problem.

    The four cases are exhaustive once the special case holds:
    EI exists and ``a >= k*rho/theta`` gives EI, EI exists and
    ``a < k*rho/theta`` means E* exists; otherwise EP when it exists, else E1.
    """
    _require_special_case(p)
    a = p.a
    thr = neumann_thresholds(p)
    ep_possible = "a_EP" in thr
    margin = min(_rel_gap(a, t) for t in thr.values())
    if ep_possible:
        margin = min(margin, _rel_gap(p.k, p.c))
    boundary = margin <= EQUALITY_RTOL

    ei_exists = a > thr["a_EI"] and not _close(a, thr["a_EI"], EQUALITY_RTOL)
    ep_exists = ep_possible and a > thr["a_EP"] and not _close(a, thr["a_EP"], EQUALITY_RTOL)

    if ei_exists and a >= thr["a_Estar"] * (1 - EQUALITY_RTOL):
        return RegimePrediction(
            "EI", "EI exists (a > b + c*rho/theta) and a >= k*rho/theta", boundary, margin
        )
    if ei_exists:
        return RegimePrediction(
            "Estar", "E* exists (b + c*rho/theta < a < k*rho/theta)", boundary, margin
        )
    if ep_exists:
        return RegimePrediction(
            "EP", "EP exists (k > c, a > bk/(k-c)) and a <= b + c*rho/theta", boundary, margin
        )
    why = "a <= b + c*rho/theta and " + ("a <= bk/(k-c)" if ep_possible else "k <= c")
    return RegimePrediction("E1", why, boundary, margin)


@dataclass
class EigenBundle:
    """Principal eigenvalues that decide existence and stability on a
    Dirichlet domain. Entries are ``None`` when their prerequisite steady
    state does not exist."""

    lam0_d: float
    lam0_D: float
    lam_b_minus_a: float
    lam_infection: Optional[float] = None
    """lambda_1^d(b - (k-c) S*)"""
    lam_predator: Optional[float] = None
    """lambda_1^D(rho - theta S*)"""
    lam_full: Optional[float] = None
    """lambda_1^d(b - (k-c) S_hat + ell P_hat)"""

    def to_dict(self) -> dict:
        return asdict(self)


def classify_dirichlet(p: Parameters, eig: EigenBundle, band: float = EQUALITY_RTOL) -> RegimePrediction:
    """Predicted attractor of the hostile-boundary problem from eigenvalue signs.

    Eigenvalues are compared against zero relative to the diffusive scale
    ``lam0_d`` (or ``lam0_D`` for the predator); ``band`` sets how close to
    zero counts as a boundary case.
    """
    _require_special_case(p)

    def rel(x, scale):
        return abs(x) / scale

    lam = eig.lam_b_minus_a
    margins = [rel(lam, eig.lam0_d)]
    if lam >= 0 or margins[0] <= band:
        return RegimePrediction(
            "extinction", "lambda_1^d(b-a) >= 0: all species die out", margins[0] <= band, margins[0]
        )
    if eig.lam_predator is None:
        raise ValueError("eigenvalue bundle lacks lambda_1^D(rho - theta S*) although S* exists")
    margins.append(rel(eig.lam_predator, eig.lam0_D))
    infection_dead = p.k <= p.c
    if not infection_dead:
        if eig.lam_infection is None:
            raise ValueError("eigenvalue bundle lacks lambda_1^d(b - (k-c) S*)")
        margins.append(rel(eig.lam_infection, eig.lam0_d))
    margin = min(margins)
    boundary = margin <= band

    if eig.lam_predator > 0:
        if infection_dead or eig.lam_infection > 0:
            why = "lambda_1^D(rho-theta S*) > 0 and " + (
                "k <= c" if infection_dead else "lambda_1^d(b-(k-c)S*) > 0"
            )
            return RegimePrediction("Sstar00", why, boundary, margin)
        if eig.lam_infection < 0:
            return RegimePrediction(
                "StildeItilde0",
                "lambda_1^d(b-(k-c)S*) < 0 and lambda_1^D(rho-theta S*) > 0",
                boundary,
                margin,
            )
    return RegimePrediction(
        "unresolved",
        "no convergence result covers this sign pattern (predator can invade S*)",
        boundary,
        margin,
    )


@dataclass
class BoundConstants:
    prey_bound: float
    mass_bound: float
    delta: float
    predator_bound: Optional[float] = None
    """Pointwise bound on P, available when d == D."""
    mass_bound_tight: float = field(default=math.nan)
    """max{int W0, (a+rho-b)^2 |Omega| / (4 c rho)}, also an upper bound."""


def bound_constants(p: Parameters, initial: State, grid) -> BoundConstants:
    """A-priori bounds for a positive solution started from ``initial``.

    ``mass_bound`` integrates the pointwise estimate over the domain, so the
    constant term carries a factor ``|Omega|``.
    """
    S0, I0, P0 = initial.S, initial.I, initial.P
    prey_bound = max(float(np.max(S0 + I0)), (p.a - p.b) / p.c)
    delta = min(p.ell / p.theta, p.gamma / p.sigma)
    W0 = S0 + I0 + delta * P0
    source = (p.a + p.rho - p.b) ** 2 / (4 * p.c * p.rho)
    int_W0 = grid.integrate(W0)
    mass_bound = int_W0 + source * grid.length
    tight = max(int_W0, source * grid.length)
    pred = None
    if p.d == p.D:
        pred = max(float(np.max(W0)), source) / delta
    return BoundConstants(prey_bound, mass_bound, delta, pred, tight)
