"""Kinetic equation solver and sticky-particle simulator for scalar conservation laws."""

from .hamiltonian import (
    Hamiltonian,
    ValidationReport,
    Violation,
    dd_table,
    divided_difference,
    max_speed,
    polynomial,
    quadratic,
    scaled_quadratic,
    validate_hamiltonian,
)
from .kinetic import (
    SolverScheme,
    apply_kinetic_operator,
    apply_marginal_operator,
    chain_density,
    convergence_study,
    lstar_weight,
    solve_kinetic,
    solve_marginal,
)
from .particles import (
    BoundaryProcess,
    Configuration,
    Event,
    advance_deterministic,
    insert_particle,
    next_deterministic_event,
    simulate_pdmp,
)
from .sampling import RandomStreamPolicy, sample_candidate, sample_initial_path
from .state_space import (
    KernelTrajectory,
    MarginalMeasure,
    MarginalTrajectory,
    RateKernel,
    StateGrid,
    custom_matrix,
    kernel_norm,
    single_step,
    tv_norm,
    uniform_up,
    validate_rate_kernel,
)
from .statistics import (
    DEFAULT_TEST_FUNCTIONS,
    ExperimentReport,
    Statistic,
    TestFunction,
    chi_square_against,
    estimate_mean,
    evaluate_solution,
    laplace_functional,
    path_measure,
    two_sample_z,
)

__version__ = "0.1.0"
