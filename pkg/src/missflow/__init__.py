"""missflow: particle-flow generation of complete samples from data with
values missing at random.

The package turns a masked dataset into a new fully observed sample whose
distribution approximates the uncontaminated one: rows are grouped by
missingness pattern, a kernel-weighted local linear fit per pattern
estimates a density-ratio gradient on the observed coordinates, and an
Euler-discretized particle flow follows the frequency-weighted average of
those gradients.
"""

__version__ = "0.1.0"

from .dataset import (
    DataError,
    FullyMissingColumnError,
    MaskedDataset,
    MaskedReadError,
    Pattern,
    PatternGroup,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    partition_by_pattern,
    write_csv,
)
from .evaluate import EnergyReport, energy_distance, quantile, standardized_energy
from .flow import (
    FlowConfig,
    FlowReport,
    NumericalAbort,
    ParticleEnsemble,
    initialize_marginal,
    objective_trace,
    run,
    step,
)
from .kernel import Bandwidth, median_heuristic, rbf_kernel
from .simulate import (
    MarMechanism,
    SyntheticSpec,
    amputate,
    generic_logistic_mar,
    sample_gaussian,
    sample_uniform_copula,
    three_pattern_mechanism,
)
from .velocity import (
    LinearSolveError,
    LocalLinearSystem,
    VelocityResult,
    aggregate_velocity,
    assemble_system,
    ensemble_velocities,
    pattern_velocity,
    solve_system,
)

__all__ = [
    "__version__",
    "DataError",
    "FullyMissingColumnError",
    "MaskedDataset",
    "MaskedReadError",
    "Pattern",
    "PatternGroup",
    "Standardizer",
    "apply_standardizer",
    "fit_standardizer",
    "load_csv",
    "partition_by_pattern",
    "write_csv",
    "EnergyReport",
    "energy_distance",
    "quantile",
    "standardized_energy",
    "FlowConfig",
    "FlowReport",
    "NumericalAbort",
    "ParticleEnsemble",
    "initialize_marginal",
    "objective_trace",
    "run",
    "step",
    "Bandwidth",
    "median_heuristic",
    "rbf_kernel",
    "MarMechanism",
    "SyntheticSpec",
    "amputate",
    "generic_logistic_mar",
    "sample_gaussian",
    "sample_uniform_copula",
    "three_pattern_mechanism",
    "LinearSolveError",
    "LocalLinearSystem",
    "VelocityResult",
    "aggregate_velocity",
    "assemble_system",
    "ensemble_velocities",
    "pattern_velocity",
    "solve_system",
]
