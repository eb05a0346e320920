"""Uniform 1-D grids, the discrete Laplacian and tridiagonal (Thomas) solves.

Node layout
-----------
Dirichlet fields hold the ``n`` interior nodes only; the boundary values are
implicitly zero. Neumann fields hold all ``n + 2`` nodes, boundary included,
and the zero-flux condition is imposed by reflection (ghost value equal to the
first interior neighbour), which keeps the scheme second order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .errors import GridError


class BC(str, Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid:
    """Uniform discretisation of the interval (0, length)."""

    length: float
    n: int
    bc: BC = BC.NEUMANN

    def __post_init__(self):
        if not self.length > 0:
            raise GridError(f"length must be positive, got {self.length}")
        if int(self.n) != self.n or self.n < 3:
            raise GridError(f"need at least 3 interior nodes, got {self.n}")
        object.__setattr__(self, "bc", BC(self.bc))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.length / (self.n + 1)

    @property
    def size(self) -> int:
        """Number of stored nodes for this boundary condition."""
        return self.n + 2 if self.bc is BC.NEUMANN else self.n

    @property
    def x(self) -> np.ndarray:
        """Coordinates of the stored nodes."""
        full = np.linspace(0.0, self.length, self.n + 2)
        return full if self.bc is BC.NEUMANN else full[1:-1]

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the stored nodes.

        For Dirichlet the omitted boundary nodes carry zero values, so the
        trapezoid rule reduces to ``h`` times the interior sum.
        """
        w = np.full(self.size, self.h)
        if self.bc is BC.NEUMANN:
            w[0] = w[-1] = 0.5 * self.h
        return w

    def integrate(self, u) -> float:
        return float(np.dot(self.weights, self.check(u)))

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise GridError(
                f"field of shape {u.shape} does not conform to {self.bc.value} "
                f"grid with {self.size} stored nodes"
            )
        return u

    def field(self, value) -> np.ndarray:
        """Broadcast a scalar, callable of x, or array into a conforming field."""
        if callable(value):
            return self.check(np.asarray(value(self.x), dtype=float))
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return np.full(self.size, float(arr))
        return self.check(arr)

    def with_n(self, n: int) -> "Grid":
        return Grid(self.length, n, self.bc)


def laplacian_bands(g: Grid):
    """Sub-, main- and super-diagonal of the discrete Laplacian on ``g``."""
    s = 1.0 / g.h**2
    m = g.size
    lower = np.full(m, s)
    diag = np.full(m, -2.0 * s)
    upper = np.full(m, s)
    lower[0] = 0.0
    upper[-1] = 0.0
    if g.bc is BC.NEUMANN:
        upper[0] = 2.0 * s
        lower[-1] = 2.0 * s
    return lower, diag, upper


def apply_laplacian(g: Grid, u) -> np.ndarray:
    u = g.check(u)
    out = np.empty_like(u)
    inv_h2 = 1.0 / g.h**2
    out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) * inv_h2
    if g.bc is BC.NEUMANN:
        out[0] = 2.0 * (u[1] - u[0]) * inv_h2
        out[-1] = 2.0 * (u[-2] - u[-1]) * inv_h2
    else:
        out[0] = (-2.0 * u[0] + u[1]) * inv_h2
        out[-1] = (u[-2] - 2.0 * u[-1]) * inv_h2
    return out


@njit(cache=True)
def _thomas_factor(lower, diag, upper):
    m = diag.shape[0]
    cp = np.empty(m)
    den = np.empty(m)
    den[0] = diag[0]
    cp[0] = upper[0] / den[0]
    for i in range(1, m):
        den[i] = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den[i]
    return cp, den


@njit(cache=True)
def _thomas_solve(lower, cp, den, rhs, out):
    m = rhs.shape[0]
    out[0] = rhs[0] / den[0]
    for i in range(1, m):
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / den[i]
    for i in range(m - 2, -1, -1):
        out[i] -= cp[i] * out[i + 1]


class Tridiagonal:
    """Thomas factorisation of a tridiagonal matrix, reusable across solves.

    No pivoting is done, so the matrix should be diagonally dominant (all
    shifted Laplacians used here are M-matrices).
    """

    def __init__(self, lower, diag, upper):
        self.lower = np.ascontiguousarray(lower, dtype=float)
        self.diag = np.ascontiguousarray(diag, dtype=float)
        self.upper = np.ascontiguousarray(upper, dtype=float)
        try:
            self.cp, self.den = _thomas_factor(self.lower, self.diag, self.upper)
        except ZeroDivisionError:
            raise np.linalg.LinAlgError("singular tridiagonal system") from None
        if not np.all(np.isfinite(self.den)) or np.any(self.den == 0.0):
            raise np.linalg.LinAlgError("singular tridiagonal system")

    def solve(self, rhs) -> np.ndarray:
        rhs = np.ascontiguousarray(rhs, dtype=float)
        out = np.empty_like(rhs)
        _thomas_solve(self.lower, self.cp, self.den, rhs, out)
        return out

    def matvec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out


def shifted_operator(g: Grid, d: float, m) -> Tridiagonal:
    """Factorised ``m - d * Laplacian``; ``m`` may be a scalar or a field."""
    lower, diag, upper = laplacian_bands(g)
    shift = np.broadcast_to(np.asarray(m, dtype=float), diag.shape)
    return Tridiagonal(-d * lower, shift - d * diag, -d * upper)


def solve_helmholtz(g: Grid, d: float, m: float, rhs) -> np.ndarray:
    """Solve ``(m - d * Laplacian) u = rhs`` on ``g``.

    Raises
    ------
    GridError
        for a non-conforming ``rhs``, negative ``m`` or nonpositive ``d``, or
        ``m == 0`` with Neumann boundaries (constants span the kernel).
    """
    rhs = g.check(rhs)
    if d <= 0:
        raise GridError("diffusivity must be positive")
    if m < 0:
        raise GridError("shift m must be nonnegative")
    if g.bc is BC.NEUMANN and m == 0:
        raise GridError("Neumann Helmholtz operator is singular for m = 0")
    return shifted_operator(g, d, m).solve(rhs)
