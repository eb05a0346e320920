"""Reaction-diffusion model of susceptible prey, infected prey and predator.

Modules: ``model`` (parameters, equilibria, regime classifiers), ``grid``
(1-D finite differences), ``eigen`` (principal eigenvalues), ``steady``
(Newton solvers for steady states), ``simulate`` (IMEX time stepping with
monitors), ``verify`` (scenario engine) and ``cli``.
"""

from .eigen import EigenResult, lambda0, principal_eigenvalue
from .errors import (
    EcoEpiError,
    EigenConvergenceError,
    GridError,
    InconsistencyError,
    InitialDataError,
    NewtonDivergence,
    ParameterError,
    PositivityError,
    SolverError,
)
from .grid import BC, Grid, apply_laplacian, solve_helmholtz
from .model import (
    PRESETS,
    EigenBundle,
    Parameters,
    RegimePrediction,
    State,
    bound_constants,
    classify_dirichlet,
    classify_neumann,
    equilibria,
    reaction_terms,
)
from .simulate import (
    PreyPredatorParams,
    Problem,
    Trajectory,
    check_monitors,
    detect_convergence,
    integrate,
    lyapunov_F,
    lyapunov_V,
)
from .steady import (
    existence_conditions,
    solve_full,
    solve_prey_predator,
    solve_S_star,
    solve_SI,
    steady_report,
    uniqueness_probe,
)
from .verify import Scenario, ScenarioReport, run_scenario, sweep

__version__ = "0.1.0"
