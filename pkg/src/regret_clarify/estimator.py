"""Scikit-learn style wrapper around the Bayesian fitting workflow."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import bpppv, pointwise_log_likelihood, posterior_predictive, psis_loo
from .inference import McmcConfig, sample_posterior, summarize
from .models import parse_variant
from .scenario import CATEGORIES
from .validation import check_conditions, check_counts, check_responses, counts_from_xy

__all__ = ["RegretClarificationModel"]


class RegretClarificationModel(BaseEstimator):
    """Posterior over the expected-regret model for one variant.

    ``fit`` accepts either per-trial data (``X`` conditions, ``y`` response
    labels) or, with ``y=None``, aggregated counts in any form accepted by
    :func:`~regret_clarify.validation.check_counts`.

    After fitting, ``samples_`` holds the draws, ``report_`` the parameter
    summary and ``counts_`` the data that were fitted. ``predict_proba``
    returns the posterior-mean response distribution with columns in
    ``classes_`` order (cq, exh, ms1, ms2).
    """

    def __init__(self, model="main", chains=4, warmup=3000, draws=4000, seed=0,
                 target_accept=0.3, init_jitter=0.1, substeps=None):
        self.model = model
        self.chains = chains
        self.warmup = warmup
        self.draws = draws
        self.seed = seed
        self.target_accept = target_accept
        self.init_jitter = init_jitter
        self.substeps = substeps

    def _config(self) -> McmcConfig:
        return McmcConfig(
            chains=self.chains, warmup=self.warmup, draws=self.draws, seed=self.seed,
            target_accept=self.target_accept, init_jitter=self.init_jitter,
            substeps=self.substeps,
        )

    def fit(self, X, y=None):
        counts = check_counts(X) if y is None else counts_from_xy(X, y)
        config = self._config()
        self.variant_ = parse_variant(self.model)
        self.counts_ = counts
        self.samples_ = sample_posterior(counts, self.variant_, config)
        self.report_ = summarize(self.samples_, config)
        self.classes_ = np.array(CATEGORIES)
        return self

    @property
    def converged_(self) -> bool:
        check_is_fitted(self, "report_")
        return self.report_.converged()

    def predict_proba(self, X=None) -> np.ndarray:
        """(n, 4) posterior-mean probabilities; ``X=None`` means all four conditions."""
        check_is_fitted(self, "samples_")
        conds = check_conditions(X)
        return posterior_predictive(self.samples_, conds).mean

    def predict(self, X=None) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def score(self, X=None, y=None) -> float:
        """Mean log posterior-predictive probability per observation.

        With no arguments this is the PSIS-LOO elpd of the fitted data
        divided by its size, which does not reward overfitting.
        """
        check_is_fitted(self, "samples_")
        if X is None and y is None:
            return self.loo().elpd / max(self.counts_.total_n, 1)
        probs = self.predict_proba(X)
        cats = check_responses(y)
        if len(cats) != len(probs):
            raise ValueError(f"X has {len(probs)} rows but y has {len(cats)}")
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(probs[np.arange(len(cats)), cats])))

    def loo(self):
        check_is_fitted(self, "samples_")
        return psis_loo(pointwise_log_likelihood(self.samples_, self.counts_))

    def bpppv(self, statistic="binomial-cq", seed=0) -> float:
        check_is_fitted(self, "samples_")
        return bpppv(self.samples_, self.counts_, statistic, seed=seed)
