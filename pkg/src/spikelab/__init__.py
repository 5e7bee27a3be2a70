"""spikelab: simulation and verification toolkit for spiked-covariance
PCA asymptotics.

Build multi-tier spike models, sample Gaussian data through the
standardized-factor route, decompose sample covariances directly or via
the Gram dual, compare the eigenstructure against deterministic or
sampled theoretical limits, and replicate everything under seeded
counter-based randomness.
"""

from .eigen import (
    AngleReport,
    EigenResult,
    angle_between,
    angle_report,
    angle_to_subspace,
    exact_identity_residuals,
    gram_eigen,
    pairwise_angles,
    population_scores,
    sample_eigen,
    score_ratios,
)
from .limits import (
    HdlssLimitSample,
    LimitPrediction,
    NoiseLimit,
    SpikeLimit,
    cone_angle_deg,
    hdlss_limit_sample,
    predict,
    predict_noise,
)
from .model import (
    Basis,
    ConfigError,
    CovarianceSpec,
    Regime,
    RegimeReport,
    SpikeModel,
    Tier,
    build_model,
    classify_regime,
    full_basis,
    index_sets,
    model_from_config,
    population_covariance,
    spike_basis,
)
from .montecarlo import (
    ConvergenceTable,
    DensityCurve,
    IdentityReport,
    MonteCarloSummary,
    Tolerances,
    VerificationReport,
    aggregate,
    identity_check,
    kde,
    pairwise_stats,
    run_replications,
    sweep,
    verify,
)
from .sampling import (
    DataMatrix,
    ZMatrix,
    center,
    dump_data,
    load_data,
    random_orthogonal,
    sample_data,
    sample_z,
)

__version__ = "0.1.0"

__all__ = [
    "AngleReport",
    "Basis",
    "ConfigError",
    "ConvergenceTable",
    "CovarianceSpec",
    "DataMatrix",
    "DensityCurve",
    "EigenResult",
    "HdlssLimitSample",
    "IdentityReport",
    "LimitPrediction",
    "MonteCarloSummary",
    "NoiseLimit",
    "Regime",
    "RegimeReport",
    "SpikeLimit",
    "SpikeModel",
    "Tier",
    "Tolerances",
    "VerificationReport",
    "ZMatrix",
    "aggregate",
    "angle_between",
    "angle_report",
    "angle_to_subspace",
    "build_model",
    "center",
    "classify_regime",
    "cone_angle_deg",
    "dump_data",
    "exact_identity_residuals",
    "full_basis",
    "gram_eigen",
    "hdlss_limit_sample",
    "identity_check",
    "index_sets",
    "kde",
    "load_data",
    "model_from_config",
    "pairwise_angles",
    "pairwise_stats",
    "population_covariance",
    "population_scores",
    "predict",
    "predict_noise",
    "random_orthogonal",
    "run_replications",
    "sample_data",
    "sample_eigen",
    "sample_z",
    "spike_basis",
    "score_ratios",
    "sweep",
    "verify",
]
