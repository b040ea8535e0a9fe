"""Periodic orbits of convex Lagrangian systems on flat tori.

Numerical machinery for fundamental solutions of linear Hamiltonian systems,
Maslov-type indices of symplectic paths, Legendre duality between Lagrangian
and Hamiltonian data, loop-space variational analysis, and iteration theory
for closed orbits.
"""

__version__ = "0.1.0"

from .symplectic import (
    standard_symplectic_matrix,
    is_symplectic,
    block_decompose,
    project_symplectic,
    integrate_fundamental,
    SymplecticPath,
)
from .maslov import (
    TolerancePolicy,
    Crossing,
    IndexResult,
    MuIndices,
    MeanIndexResult,
    ConvergenceError,
    nullity,
    power_nullity,
    cz_index,
    cz_index_sequence,
    mu_indices,
    mu_index_sequence,
    clm_graph_index,
    iterate_path,
    mean_index,
    check_assumption_B,
)
from .models import (
    TrigTerm,
    TrigField,
    MatrixTrigField,
    LagrangianModel,
    QuadraticLagrangian,
    PhysicalLagrangian,
    TorusMetricLagrangian,
    SturmData,
    free_particle,
    harmonic_oscillator,
    pendulum,
    coupled_pendula,
    physical_example,
    torus_metric_example,
    model_from_spec,
    model_to_spec,
    euler_lagrange_residual,
    linearize_along_orbit,
    sturm_to_hamiltonian,
    check_symmetric_coefficients,
)
from .duality import (
    FiberSolveError,
    HamiltonianModel,
    QuadraticHamiltonian,
    PhysicalHamiltonian,
    TorusMetricHamiltonian,
    LegendreDualHamiltonian,
    LegendreDualLagrangian,
    DualityReport,
    legendre_L_to_H,
    legendre_H_to_L,
    dual_hamiltonian,
    dual_lagrangian,
    fiber_minimum,
    verify_duality_identities,
    check_growth_conditions,
)
from .loops import (
    ZERO_TOL_REL,
    Loop,
    PeriodicOrbit,
    HessianResult,
    InertiaResult,
    AmbiguousSpectrum,
    action,
    action_gradient,
    action_hessian,
    hessian_inertia,
    morse_counts,
    find_orbit,
    restrict_even,
    is_even,
    zero_mode_angle,
    sobolev_c0_check,
)
from .iteration import (
    DEFAULT_K_SET,
    IndexRow,
    IndexSequence,
    SymmetricSplitRow,
    SymmetricSplitSequence,
    iterate_loop,
    iterate_orbit,
    index_sequence,
    verify_iteration_inequalities,
    symmetric_split_sequence,
    detect_stable_subsequence,
)

__all__ = [
    "__version__",
    "standard_symplectic_matrix",
    "is_symplectic",
    "block_decompose",
    "project_symplectic",
    "integrate_fundamental",
    "SymplecticPath",
    "TolerancePolicy",
    "Crossing",
    "IndexResult",
    "MuIndices",
    "MeanIndexResult",
    "ConvergenceError",
    "nullity",
    "power_nullity",
    "cz_index",
    "cz_index_sequence",
    "mu_indices",
    "mu_index_sequence",
    "clm_graph_index",
    "iterate_path",
    "mean_index",
    "check_assumption_B",
    "TrigTerm",
    "TrigField",
    "MatrixTrigField",
    "LagrangianModel",
    "QuadraticLagrangian",
    "PhysicalLagrangian",
    "TorusMetricLagrangian",
    "SturmData",
    "free_particle",
    "harmonic_oscillator",
    "pendulum",
    "coupled_pendula",
    "physical_example",
    "torus_metric_example",
    "model_from_spec",
    "model_to_spec",
    "euler_lagrange_residual",
    "linearize_along_orbit",
    "sturm_to_hamiltonian",
    "check_symmetric_coefficients",
    "FiberSolveError",
    "HamiltonianModel",
    "QuadraticHamiltonian",
    "PhysicalHamiltonian",
    "TorusMetricHamiltonian",
    "LegendreDualHamiltonian",
    "LegendreDualLagrangian",
    "DualityReport",
    "legendre_L_to_H",
    "legendre_H_to_L",
    "dual_hamiltonian",
    "dual_lagrangian",
    "fiber_minimum",
    "verify_duality_identities",
    "check_growth_conditions",
    "Loop",
    "PeriodicOrbit",
    "HessianResult",
    "ZERO_TOL_REL",
    "InertiaResult",
    "AmbiguousSpectrum",
    "action",
    "action_gradient",
    "action_hessian",
    "hessian_inertia",
    "morse_counts",
    "find_orbit",
    "restrict_even",
    "is_even",
    "zero_mode_angle",
    "sobolev_c0_check",
    "DEFAULT_K_SET",
    "IndexRow",
    "IndexSequence",
    "SymmetricSplitRow",
    "SymmetricSplitSequence",
    "iterate_loop",
    "iterate_orbit",
    "index_sequence",
    "verify_iteration_inequalities",
    "symmetric_split_sequence",
    "detect_stable_subsequence",
]
