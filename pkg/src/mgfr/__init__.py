"""Global Frechet regression (GFR) for metric-space responses, plus its multilabel variants MGFR and DMGFR."""
from ._errors import (
    DegenerateRate,
    DegenerateWeights,
    FrechetError,
    IllConditioned,
    IncompatibleSpaces,
    InvalidConfiguration,
    InvalidInput,
)
from .covariance import MomentEstimates, ThetaConfig, ThetaMatrix, compute_theta, empirical_moments
from .kernels import BACKEND
from .metric_spaces import (
    GaussianPoint,
    GaussianSpace,
    ProbabilityGrid,
    QuantileFunction,
    QuantileSpace,
    SolverConfig,
    SpherePoint,
    SphereSpace,
    bures_wasserstein_sq,
    empirical_quantile,
    frechet_mean_gaussian,
    frechet_mean_quantile,
    frechet_mean_sphere,
    isotonic_project,
    sphere_geodesic_sq,
    wasserstein_sq_quantile,
)
from .regression import (
    EstimatorKind,
    FrechetFit,
    TrainedModel,
    fit_at,
    gfr_weights,
    in_sample_loss,
    mgfr_weights,
    predict_batch,
    train,
)

__version__ = "0.1.0"
