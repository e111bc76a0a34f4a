"""Metropolised particle smoothing for state-space models."""

from .analysis import (
    efficiency,
    estimator_variance,
    j_opt,
    recommend_j,
    tavc,
    variance_report,
    within_cloud_variance,
)
from .filter import (
    DegenerateCloudError,
    FilterTrace,
    ParticleCloud,
    apf_step,
    init_particles,
    log_z_estimate,
    run_filter,
)
from .mcmc import (
    ChainConfig,
    ChainResult,
    ChainState,
    ExtractionMode,
    ParameterModel,
    SweepRecord,
    imh_sweep,
    log_random_walk,
    pmmh_sweep,
    run_chain,
)
from .model import (
    DiscreteHmmParams,
    GrowthModelParams,
    LinearGaussianParams,
    ObservationRecord,
    StateSpaceModel,
    discrete_hmm_model,
    growth_model,
    growth_transition_mean,
    hmm_forward_backward,
    kalman_smoother,
    linear_gaussian_model,
    simulate_data,
)
from .smoother import (
    BackwardSamplerStats,
    DegenerateBackwardKernelError,
    SmoothingMarginals,
    Trajectory,
    backward_paths_ar,
    backward_paths_exact,
    backward_smoothing_marginals,
    backward_weights,
    extract_genealogy,
    genealogy_marginals,
    sample_backward_ar,
    sample_backward_exact,
    smoothed_expectation,
)

__version__ = "0.1.0"
