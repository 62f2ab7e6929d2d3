"""Spectra of weighted slices and subblocks of structured random matrices.

The package computes eigenvalue densities of h^{1/2} M h^{1/2} for large
random matrices described by position-dependent loop cumulants, via a grid
fixed-point solver, and cross-validates against a non-crossing-partition
moment oracle and direct Monte Carlo simulation.
"""

from .errors import (
    BranchError,
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InvalidPartitionError,
    NoSolutionError,
    RootTrackingError,
    SizeLimitError,
    StabilityError,
    SubspectraError,
    UndefinedSTransformError,
    UnsupportedOrderError,
)
from .grids import GridFunction, midpoints
from .kernels import LocalCumulantKernel, constant_kernel
from .ncpart import (
    NCPartition,
    catalan,
    enumerate_nc,
    is_noncrossing,
    kreweras,
    marked_moment_oracle,
    moment_oracle,
)
from .freeprob import (
    FormalSeries,
    Measure1D,
    SpectralDensity,
    cumulants_to_moments,
    density_from_resolvent,
    free_additive_convolution,
    free_compress,
    free_cumulants,
    free_multiplicative_convolution,
    moments,
    moments_to_cumulants,
    richardson_extrapolate,
    s_transform,
    s_transform_to_cumulants,
)
from .solver import (
    FixedPointState,
    estimate_radius,
    f0_value,
    fixed_point_solve,
    functional_derivative_check,
    grand_potential,
    moment_series,
    r0_apply,
    resolvent,
    spectral_density,
)
from .ensembles import (
    QRoot,
    QssepBlockSpec,
    haar_kernel,
    haar_subblock_density,
    haar_subblock_moments,
    inhomogeneous_wigner_density,
    inhomogeneous_wigner_kernel,
    nonfreeness_diagnostic,
    qssep_f0,
    qssep_full_density,
    qssep_kernel,
    qssep_subblock_density,
    qssep_support,
    solve_Q,
    wigner_kernel,
)
from .rmt_mc import (
    QssepConfig,
    QssepRun,
    empirical_density,
    estimate_local_cumulants,
    ks_distance,
    qssep_run,
    sample_haar_conjugated,
    sample_wigner,
    subblock_eigs,
)

__all__ = [s for s in dir() if not s.startswith("_")]
__version__ = "0.1.0"
