"""Explicit Wasserstein bounds in the martingale central limit theorem, with Monte Carlo verification."""

from . import completion  # noqa: F401  (registers the "completed" model)
from .bounds import (
    BoundReport,
    cor1_bound,
    cor2_bound,
    cor3_bound,
    dw_to_dk,
    optimize_smoothing,
    thm1_bound,
    thm2_bound,
)
from .completion import CompletedModel, complete_to_constant_variance, verify_completion
from .distances import (
    DistanceEstimate,
    kolmogorov_empirical_vs_normal,
    normal_cdf,
    normal_quantile,
    wasserstein_empirical_vs_normal,
    wasserstein_sample_vs_sample,
)
from .models import (
    MartingaleModel,
    ModelCertificates,
    ModelMoments,
    PathRecord,
    available_models,
    build_model,
    check_martingale_property,
    model_moments,
    simulate_path,
)

__version__ = "0.1.0"
