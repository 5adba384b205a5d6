"""Numerical toolkit for periodic two-type reaction-diffusion systems.

Principal eigenvalues of the cooperative linearization, the front-speed
dispersion relation, nontrivial periodic steady states with their
bifurcation branch, the cooperative strip problem solved by monotone
iteration, and time-domain simulations exhibiting the extinction /
propagation dichotomy and pulsating fronts.
"""

from .errors import PulsefrontError, ScenarioError, SolverError
from .fields import (
    Bounds,
    CoefficientField,
    CoefficientSpec,
    Harmonic,
    IntervalGrid,
    PeriodicGrid,
    ScenarioConfig,
    build_field,
    constant_field,
    load_scenario,
    parse_scenario,
    sample_matrix_A,
    serialize_scenario,
)
from .spectral import (
    DispersionCurve,
    EigenPair,
    dirichlet_principal_eig,
    dispersion_curve,
    min_speed,
    monotonicity_check_eps,
    periodic_principal_eig,
    strip_rayleigh_bound,
)
from .steady import (
    BranchPoint,
    SteadyState,
    box_bound,
    continuation_branch,
    multi_start_states,
    steady_newton,
    steady_time_march,
)
from .strip import (
    StripGrid,
    StripSolution,
    assemble_Leps,
    choose_strip_grid,
    solve_cooperative,
    solve_with_normalization,
    strip_constants,
)
from .frontsim import (
    FrontMetrics,
    SimulationResult,
    extinction_rate_fit,
    front_speed,
    kappa_uniform_gradient_check,
    level_trajectory,
    lower_envelope_check,
    pulsating_residual,
    simulate,
)

__version__ = "0.1.0"
