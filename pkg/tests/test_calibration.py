"""Simulation-based calibration of the Main posterior at a reduced budget."""

import numpy as np
import pytest
from scipy import stats

from regret_clarify.inference import McmcConfig, sample_posterior
from regret_clarify.models import PARAM_NAMES
from regret_clarify.scenario import ModelParams

from _helpers import simulate_counts

REPLICATES = 40
RANK_DRAWS = 99
BINS = 5


def draw_prior(rng):
    alpha = stats.truncnorm.rvs(-5.0, np.inf, loc=5.0, scale=1.0, random_state=rng)
    return ModelParams(
        epsilon_low=rng.uniform(0, .5), epsilon_high=rng.uniform(0, .5),
        delta_large=rng.uniform(0, 1), delta_small=rng.uniform(0, 1),
        alpha=alpha, tau=rng.uniform(0, 5), c=rng.uniform(0, 1),
    )


@pytest.mark.slow
def test_sbc_ranks_uniform():
    rng = np.random.default_rng(123)
    ranks = {name: [] for name in PARAM_NAMES}
    for rep in range(REPLICATES):
        truth = draw_prior(rng)
        counts = simulate_counts(truth, n=125, seed=rep)
        s = sample_posterior(counts, "main", McmcConfig(chains=2, warmup=400, draws=500, seed=rep))
        thinned = s.thin_to((RANK_DRAWS + 1) // 2)
        for name in PARAM_NAMES:
            x = thinned.param(name).ravel()[:RANK_DRAWS]
            ranks[name].append(int(np.sum(x < getattr(truth, name))))
    for name, r in ranks.items():
        hist = np.histogram(r, bins=BINS, range=(0, RANK_DRAWS + 1))[0]
        p = stats.chisquare(hist).pvalue
        # loose threshold: catches a biased sampler, not small miscalibration
        assert p > 0.001, f"{name}: rank histogram {hist.tolist()}, p={p:.2g}"
