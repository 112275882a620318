"""Finite-difference solver for the thin-film equation with Ellis rheology.

    u_t + (a u^3 [1 + |b u u_xxx|^(alpha-1)] u_xxx)_x = 0   on (-l, l),
    u_x = u_xxx = 0 at x = +-l.
"""

from .config import RunConfig, load_config, parse_config, serialize_config
from .diagnostics import (
    DiagnosticsRecord,
    blowup_monitor,
    dissipation,
    energy,
    energy_budget_residual,
    mass,
    relative_energy,
    uniqueness_stability_check,
)
from .exceptions import (
    BlowupDetected,
    ConfigError,
    ConvergenceError,
    DomainError,
    NonFiniteError,
    ShapeError,
    SingularSystemError,
    StepFailure,
    ThinFilmError,
    TouchdownDetected,
)
from .grid import FilmState, Grid1D
from .mms import ManufacturedSolution, convergence_study
from .operators import (
    CoefficientSample,
    RegularizationConfig,
    coeff_A,
    coeff_A_bar_eps,
    coeff_F,
    divergence_residual,
    holder_constants,
)
from .rheology import FluidParams, derive_params, flux, mobility, shear_stress, velocity_profile, viscosity
from .stepper import RunReport, SolverConfig, run, step

__version__ = "0.1.0"

__all__ = [
    "BlowupDetected", "CoefficientSample", "ConfigError", "ConvergenceError",
    "DiagnosticsRecord", "DomainError", "FilmState", "FluidParams", "Grid1D",
    "ManufacturedSolution", "NonFiniteError", "RegularizationConfig", "RunConfig",
    "RunReport", "ShapeError", "SingularSystemError", "SolverConfig", "StepFailure",
    "ThinFilmError", "TouchdownDetected", "blowup_monitor", "coeff_A",
    "coeff_A_bar_eps", "coeff_F", "convergence_study", "derive_params",
    "dissipation", "divergence_residual", "energy", "energy_budget_residual",
    "flux", "holder_constants", "load_config", "mass", "mobility",
    "parse_config", "relative_energy", "run", "serialize_config",
    "shear_stress", "step", "uniqueness_stability_check", "velocity_profile",
    "viscosity",
]
