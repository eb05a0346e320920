"""Principal eigenpair of ``-d * Laplacian + q`` with Dirichlet boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EigenConvergenceError, GridError
from .grid import BC, Grid, shifted_operator

MAX_ITER = 10_000
RQ_RTOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass
class EigenResult:
    lam: float
    phi: np.ndarray
    iterations: int
    residual: float


def _residual_floor(op_norm: float) -> float:
    # rounding noise of one application of the operator to an O(1) vector
    return 4 * np.finfo(float).eps * op_norm


def principal_eigenvalue(g: Grid, d: float, q=0.0, max_iter: int = MAX_ITER) -> EigenResult:
    """Smallest eigenvalue of the discrete ``-d u'' + q u`` and its positive
    eigenvector (normalised to max 1), by inverse power iteration.

    The iteration runs on ``(-d Laplacian + q + s)^{-1}`` with
    ``s = max(0, -min q) + 1``, which is positive definite. It stops once
    successive Rayleigh quotients agree to ``1e-12 (1 + |lambda|)`` and the
    eigen-residual is below ``1e-10``, or below the rounding floor of the
    operator when that floor is larger (very fine grids).
    """
    if g.bc is not BC.DIRICHLET:
        raise GridError("principal eigenvalue is defined on a Dirichlet grid")
    if d <= 0:
        raise GridError("diffusivity must be positive")
    q = g.field(q)
    s = max(0.0, -float(q.min())) + 1.0
    op = shifted_operator(g, d, q + s)
    op_norm = float(np.max(np.abs(op.diag) + np.abs(op.lower) + np.abs(op.upper)))
    res_tol = max(RESIDUAL_TOL, _residual_floor(op_norm))

    x = np.ones(g.size)
    lam_prev = np.inf
    for it in range(1, max_iter + 1):
        y = op.solve(x)
        x = y / np.max(np.abs(y))
        Ax = op.matvec(x)
        mu = float(np.dot(x, Ax) / np.dot(x, x))
        lam = mu - s
        if abs(lam - lam_prev) <= RQ_RTOL * (1 + abs(lam_prev)):
            residual = float(np.max(np.abs(Ax - mu * x)))
            if residual <= res_tol:
                break
        lam_prev = lam
    else:
        raise EigenConvergenceError(f"inverse iteration did not converge in {max_iter} steps")

    # the inverse of an M-matrix is positive, so iterates from ones stay positive
    phi = x / x.max()
    residual = float(np.max(np.abs(op.matvec(phi) - mu * phi)))
    return EigenResult(lam, phi, it, residual)


def lambda0(g: Grid, d: float) -> float:
    """Principal Dirichlet eigenvalue of ``-d * Laplacian``."""
    return principal_eigenvalue(g, d, 0.0).lam
