"""Steady-state Lindblad simulation and fitting toolkit for coherent
population trapping (CPT) in three-level lambda systems.

Subpackages map onto the analysis chain of a cryogenic color-center
experiment: a three-level master-equation engine (`quantum`), CPT dip
simulation and multi-parameter fitting (`cpt`), generic spectroscopy line
fits (`lineshapes`), temperature-broadening model selection (`thermal`),
raw-scan reduction (`scans`) and the optical-linewidth decomposition that
isolates the phononic component (`broadening`).
"""

__version__ = "0.1.0"

from .quantum import (
    DriveConfig,
    SystemRates,
    JumpOperator,
    build_hamiltonian,
    build_jump_operators,
    lindblad_rhs,
    evolve_trajectory,
    evolve_to_steady_state,
    steady_state_direct,
)
from .cpt import (
    CptSpectrum,
    CptFitParams,
    CptFitReport,
    FixedRates,
    boltzmann_gamma_plus,
    simulate_cpt_spectrum,
    default_detuning_grid,
    fit_cpt,
    sensitivity,
    dephasing_upper_bound,
)

__all__ = [
    "__version__",
    "DriveConfig",
    "SystemRates",
    "JumpOperator",
    "build_hamiltonian",
    "build_jump_operators",
    "lindblad_rhs",
    "evolve_trajectory",
    "evolve_to_steady_state",
    "steady_state_direct",
    "CptSpectrum",
    "CptFitParams",
    "CptFitReport",
    "FixedRates",
    "boltzmann_gamma_plus",
    "simulate_cpt_spectrum",
    "default_detuning_grid",
    "fit_cpt",
    "sensitivity",
    "dephasing_upper_bound",
]
