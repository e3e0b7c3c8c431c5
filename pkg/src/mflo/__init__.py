"""Molecular-orbital fitting on qubit grids with discrete Lorentzian bases.

The pipeline: sample a contracted-Gaussian molecular orbital on a uniform
grid of 2^n_qe points per direction, fit it with a product basis of
discrete Lorentzian functions by maximizing the metric-weighted overlap,
optionally rewrite the fitted core tensor as a sum of rank-one terms, and
report the ancilla/CNOT cost and post-selection success probability of the
matching amplitude-encoding circuits.
"""

from .exceptions import ConditioningError, DegenerateInputError, ResourceLimitError
from .lorentzian import (
    AXES,
    Lorentzian1D,
    LorentzianBasisSpec,
    boundary_mass,
    lf_profile,
    lf_profile_da,
    lf_state,
    lf_state_da,
    overlap_1d,
)
from .basis import (
    DEFAULT_MAX_QUBITS,
    ContractedGaussianAO,
    GridState,
    MolecularOrbital,
    SimulationCell,
    ao_self_overlap,
    build_ideal_state,
    gaussian_ao,
    renormalized,
    sample_ao_1d,
)
from .fitting import (
    FitProblem,
    OptimizeDiagnostics,
    OptimizeOptions,
    TTensor,
    TuckerState,
    box_centers,
    fidelity_gradient,
    m_integral,
    optimize_widths,
    overlap_3d,
    penalty,
    solve_core,
    t_tensor,
    tucker_statevector,
)
from .cpd import (
    CanonicalState,
    CpdOptions,
    CpResult,
    canonical_statevector,
    cp_decompose,
    decompose_core,
    normalize_factors,
    tucker_canon_overlap,
)
from .encoding import (
    CircuitCostReport,
    ancilla_counts,
    cnot_count_canonical,
    cnot_count_tucker,
    lcu_postselect_oracle,
    success_prob_canonical,
    success_prob_tucker,
    tucker_success_from_core,
    two_center_analysis,
    two_center_csv_lines,
)

__version__ = "0.1.0"

__all__ = [
    "AXES",
    "CanonicalState",
    "CircuitCostReport",
    "ConditioningError",
    "ContractedGaussianAO",
    "CpResult",
    "CpdOptions",
    "DEFAULT_MAX_QUBITS",
    "DegenerateInputError",
    "FitProblem",
    "GridState",
    "Lorentzian1D",
    "LorentzianBasisSpec",
    "MolecularOrbital",
    "OptimizeDiagnostics",
    "OptimizeOptions",
    "ResourceLimitError",
    "SimulationCell",
    "TTensor",
    "TuckerState",
    "ancilla_counts",
    "ao_self_overlap",
    "boundary_mass",
    "box_centers",
    "build_ideal_state",
    "canonical_statevector",
    "cnot_count_canonical",
    "cnot_count_tucker",
    "cp_decompose",
    "decompose_core",
    "fidelity_gradient",
    "gaussian_ao",
    "lcu_postselect_oracle",
    "lf_profile",
    "lf_profile_da",
    "lf_state",
    "lf_state_da",
    "m_integral",
    "normalize_factors",
    "optimize_widths",
    "overlap_1d",
    "overlap_3d",
    "penalty",
    "renormalized",
    "sample_ao_1d",
    "solve_core",
    "success_prob_canonical",
    "success_prob_tucker",
    "t_tensor",
    "tucker_canon_overlap",
    "tucker_statevector",
    "tucker_success_from_core",
    "two_center_analysis",
    "two_center_csv_lines",
    "__version__",
]
