"""Multivariate peaks-over-thresholds modelling with GP distributions."""

__version__ = "0.1.0"

from .core import (
    ExceedanceSet,
    GpModel,
    GptailError,
    InvalidParameterError,
    MarginalParams,
    NumericalError,
    marginal_conditional_survival,
    observed_from_standard,
    standard_from_observed,
)
from .generators import (
    Gaussian,
    GeneratorSpec,
    IndepGumbel,
    IndepLogGamma,
    IndepReverseExp,
    IndepReverseGumbel,
    StructuredExp,
)
from .density import (
    StdDensityEval,
    log_density,
    log_density_batch,
    structured_log_density,
    tform_log_density,
    uform_log_density,
    uform_norm_const,
)
from .censoring import (
    CensorPartition,
    censored_log_contributions,
    log_censored_contribution,
    negative_log_likelihood,
    partition,
)
from .fit import (
    FitError,
    FitResult,
    LrTest,
    ModelTemplate,
    PipelineError,
    fit_mle,
    lr_test,
    model_selection_pipeline,
    standard_errors,
)
from .simulate import SampleBatch, sample_gp_R_structured, sample_gp_T, sample_gp_U, sample_model
from .univariate import gp_fit, gp_quantile, gp_survival, qq_points
