"""
CGO Reconstruction Scripts

This package contains the library behind the CGO finite-measurement workflow: torus
spectral tools, prior subspaces, CGO remainder solves, the measurement operators and
the fixed-point reconstruction.
"""

# Make key functions available at the package level for easier imports
from .spectral import (
    TorusGrid,
    Field,
    Spectrum,
    FreqOrdering,
    forward_transform,
    inverse_transform,
    make_ordering,
    make_grid_ordering,
    gamma_s,
)
from .subspaces import (
    Cell,
    Partition,
    BoxConstraint,
    SubspaceSpec,
    SubspaceBasis,
    build_basis,
    char_fourier,
    project_subspace,
    project_box,
    random_element,
)
from .cgo import (
    ComplexFrequency,
    SolverConfig,
    RemainderSolution,
    make_frame,
    make_zeta,
    faddeev_symbol,
    resonance_guard,
    solve_remainder,
    remainder_decay,
    cgo_solution,
    remainder_gradient_norm,
)
from .transform import (
    TSchedule,
    MeasurementVector,
    MeasurementOperator,
    scattering_B,
    scattering_U,
    balancing_norm,
    choose_N,
    calibrate_tau,
    stability_ratio,
    phase_family_tail,
    sufficient_N,
    fit_balancing_constant,
    held_out_bound_ratio,
)
from .recon import (
    ReconConfig,
    IterationLog,
    apply_A,
    reconstruct,
    perturbation_experiment,
    liouville_potential,
    conductivity_from_profile,
)

__all__ = [
    # Spectral tools
    'TorusGrid',
    'Field',
    'Spectrum',
    'FreqOrdering',
    'forward_transform',
    'inverse_transform',
    'make_ordering',
    'make_grid_ordering',
    'gamma_s',

    # Prior subspaces
    'Cell',
    'Partition',
    'BoxConstraint',
    'SubspaceSpec',
    'SubspaceBasis',
    'build_basis',
    'char_fourier',
    'project_subspace',
    'project_box',
    'random_element',

    # CGO solutions
    'ComplexFrequency',
    'SolverConfig',
    'RemainderSolution',
    'make_frame',
    'make_zeta',
    'faddeev_symbol',
    'resonance_guard',
    'solve_remainder',
    'remainder_decay',
    'cgo_solution',
    'remainder_gradient_norm',

    # Measurement operators and balancing
    'TSchedule',
    'MeasurementVector',
    'MeasurementOperator',
    'scattering_B',
    'scattering_U',
    'balancing_norm',
    'choose_N',
    'calibrate_tau',
    'stability_ratio',
    'phase_family_tail',
    'sufficient_N',
    'fit_balancing_constant',
    'held_out_bound_ratio',

    # Reconstruction
    'ReconConfig',
    'IterationLog',
    'apply_A',
    'reconstruct',
    'perturbation_experiment',
    'liouville_potential',
    'conductivity_from_profile',
]
