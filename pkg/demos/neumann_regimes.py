"""Zero-flux boundaries: which constant equilibrium wins?

Each preset sits in a different regime. We print the constant equilibria,
the classifier's verdict and where a simulation from far-off data ends up.
"""

import math

from ecoepi.grid import Grid
from ecoepi.model import PRESETS, equilibria
from ecoepi.verify import Scenario, run_scenario

g = Grid(math.pi, 60, "neumann")

for name, p in PRESETS.items():
    print(f"{name}: a={p.a} b={p.b} c={p.c} k={p.k} ell={p.ell} theta={p.theta} rho={p.rho}")
    for label, value in equilibria(p).existing().items():
        print(f"    {label:<6} = ({value[0]:.4f}, {value[1]:.4f}, {value[2]:.4f})")
    rep = run_scenario(Scenario(p, g, T=150.0, dt=5e-3, sample_every=20, init="far", seed=1))
    print(f"    predicted {rep.prediction.attractor}, observed {rep.observed}, "
          f"distance {rep.terminal_distance:.2e} -> {rep.status}")
