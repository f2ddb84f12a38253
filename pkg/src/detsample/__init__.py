"""Determinantal point process and planar perfect-matching samplers built on
counting oracles, with explicit accounting of adaptive rounds versus total
parallel proposal work."""
from __future__ import annotations

from .errors import (
    BadParity,
    BatchRejected,
    DetSampleError,
    GroundSetTooLarge,
    IllConditioned,
    InvalidModel,
    MixedSizes,
    NoPerfectMatching,
    NotPlanar,
    OddVertexCount,
    ProbabilityViolation,
    RoundBudgetExceeded,
    SingularBlock,
    SingularMatrix,
    SupportMismatch,
    ZeroConditional,
    ZeroMass,
    ZeroMassCondition,
)
from .models import (
    Cardinality,
    ConditionedState,
    DppModel,
    Partition,
    condition,
    count,
    initial_state,
    load_model,
    marginal,
    marginal_vector,
    model_digest,
    partition_function,
    size_distribution,
)
from .planar import (
    PlanarGraph,
    count_matchings,
    cycle_graph,
    edge_marginal,
    find_separator,
    grid_graph,
    kasteleyn_orientation,
    path_graph,
    read_graph,
    sample_matching,
    signed_adjacency,
    write_graph,
)
from .numerics import (
    EnsembleMatrix,
    MarginalKernel,
    char_poly_coeffs,
    classify_matrix,
    det,
    ensemble_from_kernel,
    kernel_from_ensemble,
    read_matrix,
    schur_complement,
    write_matrix,
)
from .samplers import (
    IsotropicView,
    RoundMeter,
    SampleResult,
    SamplerConfig,
    batch_sample_ei,
    batch_sample_symmetric,
    batched_sample,
    choose_sampler,
    filtered_sample,
    isotropic_transform,
    one_step_bernoulli_sample,
    sample_dpp_via_cardinality,
    sample_ei,
    sample_many,
    sample_symmetric,
    sequential_sample,
)
from .validation import (
    ExactDistribution,
    HardPairMeasure,
    brute_force_distribution,
    downsample_distribution,
    duplicate_probabilities,
    duplicate_scaling_report,
    ei_spot_check,
    empirical_distribution,
    kl_divergence,
    renyi_divergence,
    statistical_tolerance,
    tv_distance,
)

__all__ = [
    "BadParity",
    "BatchRejected",
    "Cardinality",
    "ConditionedState",
    "DetSampleError",
    "DppModel",
    "EnsembleMatrix",
    "ExactDistribution",
    "GroundSetTooLarge",
    "HardPairMeasure",
    "IllConditioned",
    "InvalidModel",
    "IsotropicView",
    "MarginalKernel",
    "MixedSizes",
    "NoPerfectMatching",
    "NotPlanar",
    "OddVertexCount",
    "Partition",
    "PlanarGraph",
    "ProbabilityViolation",
    "RoundBudgetExceeded",
    "RoundMeter",
    "SampleResult",
    "SamplerConfig",
    "SingularBlock",
    "SingularMatrix",
    "SupportMismatch",
    "ZeroConditional",
    "ZeroMass",
    "ZeroMassCondition",
    "batch_sample_ei",
    "batch_sample_symmetric",
    "batched_sample",
    "brute_force_distribution",
    "char_poly_coeffs",
    "choose_sampler",
    "classify_matrix",
    "condition",
    "count",
    "count_matchings",
    "cycle_graph",
    "det",
    "downsample_distribution",
    "duplicate_probabilities",
    "duplicate_scaling_report",
    "edge_marginal",
    "ei_spot_check",
    "empirical_distribution",
    "ensemble_from_kernel",
    "filtered_sample",
    "find_separator",
    "grid_graph",
    "initial_state",
    "isotropic_transform",
    "kasteleyn_orientation",
    "kernel_from_ensemble",
    "kl_divergence",
    "load_model",
    "marginal",
    "marginal_vector",
    "model_digest",
    "one_step_bernoulli_sample",
    "partition_function",
    "path_graph",
    "read_graph",
    "read_matrix",
    "renyi_divergence",
    "sample_dpp_via_cardinality",
    "sample_ei",
    "sample_many",
    "sample_matching",
    "sample_symmetric",
    "schur_complement",
    "sequential_sample",
    "signed_adjacency",
    "size_distribution",
    "statistical_tolerance",
    "tv_distance",
    "write_graph",
    "write_matrix",
]

__version__ = "0.1.0"
