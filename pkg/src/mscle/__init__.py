"""Informative subsampling and efficient estimation for large GLM datasets.

The package draws small informative subsamples from large regression
datasets (binary, multinomial, or Poisson responses) and estimates the
coefficients from the subsample alone.  The headline estimator maximizes
the conditional likelihood of the sampled responses, which removes the
selection bias without inverse-probability weights and beats the weighted
estimator in efficiency; weighted and naive baselines, plug-in variance
estimates, and a Monte Carlo harness for comparing them are included.

Typical use goes through the scikit-learn style estimators::

    from mscle import SubsampledPoissonRegression
    est = SubsampledPoissonRegression(n=1000, random_state=7).fit(X, y)
    est.coef_, est.conf_int_

or through the functional layer (``pilot_fit`` -> ``*_probabilities`` ->
``draw_subsample`` -> ``mscle_fit``) when the intermediate artifacts are
needed.
"""

__version__ = "0.1.0"

from .data import Dataset, load_csv_dataset
from .errors import (
    DataValidationError,
    DegeneratePilot,
    DegenerateRow,
    MscleError,
    PilotFailure,
    SingularInformation,
    SingularVariance,
)
from .families import (
    CLOGLOG_LINK,
    PROBIT_LINK,
    BinaryLink,
    Family,
    LinkSpec,
    Logistic,
    MultiLogistic,
    Poisson,
    log_density,
    mean_response,
    score,
)
from .fitting import FitResult, fisher_scoring_mle
from .moments import (
    ConditionalMoments,
    MultiClassAdjustment,
    binary_kappas,
    multiclass_adjustment,
    poisson_cdf,
    poisson_kappas,
    poisson_q,
)
from .sampling import (
    PilotEstimate,
    SubsampleDraw,
    SubsamplePlan,
    draw_subsample,
    gradient_norm_probabilities,
    misspecify_pilot,
    multiclass_probabilities,
    pilot_fit,
    plan_draw_from_csv,
    plan_draw_to_csv,
    unified_glm_probabilities,
    uniform_probabilities,
)
from .estimators import (
    mscle_fit,
    mscle_fit_binary,
    mscle_fit_logistic_shift,
    mscle_fit_multiclass,
    mscle_fit_poisson,
    naive_fit,
    sampled_conditional_loglik,
    sampled_conditional_score_rows,
    weighted_fit,
)
from .variance import (
    VarianceEstimate,
    confidence_intervals,
    estimate_sigma_mscle,
    estimate_v_weighted,
)
from .simulate import (
    ScenarioSpec,
    StudyResult,
    decompose_bias_variance,
    generate_covariates,
    generate_responses,
    preset_scenario,
    run_inference_study,
    run_study,
)
from .api import (
    SubsampledLogisticRegression,
    SubsampledMultinomialRegression,
    SubsampledPoissonRegression,
)

__all__ = [name for name in dir() if not name.startswith("_")]
