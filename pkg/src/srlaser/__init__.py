"""Simulation and analysis of superradiant lasers with a partially driven
atomic ensemble: mean-field traveling-wave states, second-order cumulant
dynamics, regression-theorem emission spectra, and parameter sweeps."""

__version__ = "0.1.0"

from .model import (
    CumulantState,
    LorentzianFit,
    MeanFieldState,
    ParameterError,
    SpectrumGrid,
    SystemParams,
    TravelingWaveSolution,
    derive,
    from_V,
    from_coupling,
)
from .integrate import IntegratorOptions, integrate, integrate_to_steady
from .meanfield import (
    incoherent_fixed_point,
    lasing_threshold,
    lasing_threshold_decoupled,
    mf_rhs_reduced,
    mf_rhs_with_cavity,
    phase_rhs,
    standard_laser_rhs,
    standard_laser_threshold,
    traveling_wave_frequency,
)
from .cumulant import cumulant_rhs, cumulant_steady_state, output_power
from .spectrum import (
    fit_double_lorentzian,
    linewidth_from_eigenvalues,
    regression_matrix,
    steady_state_spectrum,
    transient_spectrum,
)

__all__ = [
    "CumulantState", "LorentzianFit", "MeanFieldState", "ParameterError",
    "SpectrumGrid", "SystemParams", "TravelingWaveSolution", "derive",
    "from_V", "from_coupling", "IntegratorOptions", "integrate",
    "integrate_to_steady", "incoherent_fixed_point", "lasing_threshold",
    "lasing_threshold_decoupled", "mf_rhs_reduced", "mf_rhs_with_cavity",
    "phase_rhs", "standard_laser_rhs", "standard_laser_threshold",
    "traveling_wave_frequency", "cumulant_rhs", "cumulant_steady_state",
    "output_power", "fit_double_lorentzian", "linewidth_from_eigenvalues",
    "regression_matrix", "steady_state_spectrum", "transient_spectrum",
]
