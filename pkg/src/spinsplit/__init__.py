"""Commuting-term spin Hamiltonians, their perturbations, and ground-state splitting."""

from .analysis import (
    OrderReport,
    ScalingFit,
    SplittingRecord,
    SplittingTable,
    check_order_observable,
    diagonal_splitting,
    estimate_threshold,
    first_order_splitting,
    fit_scaling,
    ground_basis,
    spectral_splitting,
    sweep_splitting,
)
from .eigensolve import (
    DegeneracyClusters,
    SolverSettings,
    Spectrum,
    cluster_degeneracies,
    dense_spectrum,
    lowest_eigenpairs,
)
from .lattice import TorusLattice, build_bond_lattice, build_torus, cells, translate_site
from .models import (
    HamiltonianSpec,
    PerturbationSpec,
    build_field_perturbation,
    build_ising,
    build_toric_code,
    check_peierls,
    check_symmetry,
    spectral_gap,
    uniform_field,
    verify_classical,
)
from .pauli import OperatorSum, PauliTerm, apply_sum, apply_term, commutes, parse_term
from .trotter import TrotterParams, exact_trace, trotter_convergence, trotter_trace

__version__ = "0.1.0"
