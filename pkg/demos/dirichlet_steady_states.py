"""Hostile boundaries: eigenvalue signs decide the long-time state.

We walk the infection rate k upward on (0, pi) and watch the principal
eigenvalues change sign, then compute the corresponding steady states.
"""

import math

import numpy as np

from ecoepi.grid import Grid
from ecoepi.model import Parameters, classify_dirichlet
from ecoepi.steady import existence_conditions, solve_full, solve_S_star, solve_SI

g = Grid(math.pi, 200, "dirichlet")
base = Parameters(a=3, b=0.5, c=1, k=0.5, ell=1, theta=1, rho=3)

s_star = solve_S_star(g, base)
print(f"lambda_0 = {existence_conditions(g, base).lam0_d:.6f} (continuum value 1)")
print(f"S* peaks at {s_star.max():.4f}, below the constant carrying capacity {(base.a - base.b) / base.c}")

print("\n  k    lam_infection  lam_predator  verdict")
for k in (0.5, 1.5, 2.0, 3.0, 5.0):
    p = base.replace(k=k)
    eig = existence_conditions(g, p)
    li = "n/a" if eig.lam_infection is None else f"{eig.lam_infection:+.4f}"
    print(f"  {k:<4} {li:>13}  {eig.lam_predator:+.4f}       {classify_dirichlet(p, eig).attractor}")

S, I = solve_SI(g, base.replace(k=3.0))
print(f"\nwith k=3 the endemic prey split is S~ max {S.max():.4f}, I~ max {I.max():.4f}")

p = Parameters(a=3, b=0.5, c=1, k=6, ell=1, theta=2, rho=1)
rep = solve_full(g, p)
sol = rep.solution
print(f"\ncoexistence at k=6, theta=2: residual {rep.residual:.1e}")
for f in ("S", "I", "P"):
    print(f"    {f}: max {np.max(sol[f]):.4f}")
