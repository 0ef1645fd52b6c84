"""Expected-regret model of clarification questions with a Bayesian workflow."""

__version__ = "0.1.0"

from .decision import (  # noqa: E402
    DecisionProblem,
    batch_response,
    eer_aggregate,
    evaluate_policy,
    expected_regret,
    expected_utility,
    regret_matrix,
    response_distribution,
    softmax_policy,
)
from .diagnostics import effective_sample_size, split_r_hat  # noqa: E402
from .evaluation import (  # noqa: E402
    bpppv,
    compare_models,
    pointwise_log_likelihood,
    posterior_predictive,
    psis_loo,
)
from .inference import (  # noqa: E402
    McmcConfig,
    ObservedCounts,
    PosteriorSamples,
    log_likelihood,
    log_prior,
    sample_posterior,
    summarize,
)
from .models import ModelVariant, variant_spec  # noqa: E402
from .scenario import CATEGORIES, CONDITIONS, Condition, ModelParams, predict, predict_table  # noqa: E402
from .estimator import RegretClarificationModel  # noqa: E402

REFERENCE_PARAMS = ModelParams(
    epsilon_low=0.17, epsilon_high=0.49, delta_large=0.32, delta_small=0.11,
    alpha=5.0, tau=3.6, c=0.18,
)
"""Posterior means reported for the main model (alpha not reported; 5 is the prior mean)."""
