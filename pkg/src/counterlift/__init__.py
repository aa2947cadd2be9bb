"""Bayesian counterfactual classification on top of uplift scores."""

from .core import (
    CounterfactualProbs,
    FrechetInterval,
    Scores,
    checked_probability,
    frechet_bounds,
    independence_estimate,
    midpoint_estimate,
    probs_from_p11,
    uplift,
)
from .distributions import (
    FAMILIES,
    BBParams,
    GDParams,
    LatentModel,
    Moments,
    NoiseParams,
    bb_moments,
    bb_sample,
    dirichlet_log_density,
    gd_log_density,
    gd_reduction,
    noise_log_density,
    noisy_sample,
    sample_compositions,
    scores_from_probs,
)
from .errors import (
    ClampWarning,
    CounterliftError,
    DegenerateSegmentError,
    DegenerateVarianceError,
    DimensionMismatchError,
    DomainError,
    EffectiveSampleSizeError,
    FamilyMismatchError,
    MissingArmError,
    OptimizerFailure,
    OutOfBoundsError,
    QuadratureFailure,
    SingleClassArmError,
    TooFewSamplesError,
)
from .fitting import (
    FitConfig,
    SampleMoments,
    ScoreSample,
    deconvolve_moments,
    fit_bb_mom,
    fit_gbb,
    fit_model,
    fit_nbb,
    fit_ngbb,
    sample_moments,
)
from .inference import (
    PosteriorResult,
    QuadratureConfig,
    population_estimate,
    posterior_log_density_p11,
    posterior_mean,
    posterior_mean_noisy,
)
from .simulation import (
    COPULA_TAGS,
    DGP_TAGS,
    ESTIMATORS,
    LEVELS,
    CellResult,
    ExperimentReport,
    SimConfig,
    SimulatedDataset,
    gen_bb,
    gen_gaussian,
    run_experiment,
    squared_error,
)
from .uplift import (
    CampaignRecord,
    UpliftConfig,
    UpliftModel,
    calibrate,
    predict_scores,
    predict_scores_batch,
    train_tlearner,
    train_tlearner_arrays,
)

__version__ = "0.1.0"
