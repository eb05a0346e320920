"""The two-species prey-predator system and its Lyapunov functionals.

V decreases when the predator cannot persist (h >= a); F decreases toward the
coexistence state (h, b(a-h)/c) when h < a. Both are recorded during the run.
"""

import numpy as np

from ecoepi.grid import Grid
from ecoepi.simulate import PreyPredatorParams, Problem, check_monitors, integrate

g = Grid(2.0, 50, "neumann")
shape = 1 + 0.5 * np.cos(np.pi * g.x / g.length)

for coeffs, which in (((2, 1, 1, 1, 3), "V"), ((3, 2, 1, 0.5, 2), "F")):
    q = PreyPredatorParams(*coeffs)
    prob = Problem(q, g, variant="prey_predator2")
    traj = integrate(prob, (1.5 * shape, 0.7 * shape), 40.0, 1e-4, sample_every=50000)
    print(f"a={q.a} h={q.h}: limit {q.limit}, monitoring {which}")
    for t, value in zip(traj.column("t"), traj.column(which)):
        print(f"    t={t:5.1f}  {which}={value:.3e}")
    u, v = traj.final
    print(f"    final u in [{u.min():.6f}, {u.max():.6f}], v in [{v.min():.6f}, {v.max():.6f}], "
          f"monitors ok: {check_monitors(prob, traj).ok}")
