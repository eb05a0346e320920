"""Sweep the birth rate a through the zero-flux thresholds of PS-A.

The predator invades once a > b + c rho / theta (1.5 here), turning EP into
the endemic state, and the infection dies out once a >= k rho / theta (4 here),
leaving EI. The sweep reports predicted and simulated transitions.
"""

import math

from ecoepi.grid import Grid
from ecoepi.model import PRESETS
from ecoepi.verify import Scenario, sweep

base = Scenario(PRESETS["PS-A"], Grid(math.pi, 40, "neumann"), T=150.0, dt=5e-3, sample_every=20)
table = sweep(base, "a", [1.0, 1.25, 1.75, 2.5, 3.5, 4.25, 4.5])

for row in table.rows():
    dist = "-" if row["distance"] is None else f"{row['distance']:.1e}"
    print(f"a={row['a']:<5} predicted={row['predicted']:<6} observed={row['observed']!s:<6} distance={dist}")
for t in table.transitions:
    print(f"{t.kind:>9}: {t.before} -> {t.after} between {t.lo} and {t.hi}, "
          f"classifier threshold {t.threshold:.6f}, closed form {t.analytic}")
