"""Simulation and Fisher-information analysis of N-probe entanglement-generating metrology."""

__version__ = "0.1.0"

from .fock import ModelParams, build_full_hamiltonian, interaction_energy  # noqa: E402
from .effective import (  # noqa: E402
    EffectiveModel,
    build_effective_hamiltonian,
    build_effective_model,
    j_eff_closed_form,
    j_eff_perturbative,
)
from .dynamics import (  # noqa: E402
    BlochState,
    TimeSeries,
    bloch_trajectory,
    evolve_effective,
    evolve_full,
    p_down_plus_state,
    p_max,
)
from .fisher import (  # noqa: E402
    DerivativeResolutionError,
    FisherSample,
    PrecisionReport,
    cfi_at_optimum_time,
    cfi_closed_form,
    cfi_gamma_optimal_params,
    cfi_numeric,
    cfi_plus_state,
    locate_optimum,
    precision_report,
    qfi_closed_form,
    qfi_effective,
    qfi_numeric,
)

__all__ = [
    "BlochState", "DerivativeResolutionError", "EffectiveModel", "FisherSample", "ModelParams",
    "PrecisionReport", "TimeSeries", "bloch_trajectory", "build_effective_hamiltonian",
    "build_effective_model", "build_full_hamiltonian", "cfi_at_optimum_time", "cfi_closed_form",
    "cfi_gamma_optimal_params", "cfi_numeric", "cfi_plus_state", "evolve_effective", "evolve_full",
    "interaction_energy", "j_eff_closed_form", "j_eff_perturbative", "locate_optimum", "p_down_plus_state",
    "p_max", "precision_report", "qfi_closed_form", "qfi_effective", "qfi_numeric",
]
