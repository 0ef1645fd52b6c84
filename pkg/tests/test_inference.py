import math

import numpy as np
import pytest
from scipy import stats

from regret_clarify.inference import (
    FitReport,
    McmcConfig,
    ObservedCounts,
    SamplerError,
    log_likelihood,
    log_likelihood_batch,
    log_prior,
    log_prior_batch,
    sample_box,
    sample_posterior,
    summarize,
)
from regret_clarify.scenario import CONDITIONS, ModelParams, predict_table

from _helpers import TRUE_PARAMS, simulate_counts

FAST = McmcConfig(chains=2, warmup=300, draws=300, seed=3)


@pytest.fixture(scope="module")
def counts():
    return simulate_counts(seed=11)


@pytest.fixture(scope="module")
def fast_fit(counts):
    return sample_posterior(counts, "main", FAST)


def test_counts_validation():
    with pytest.raises(ValueError):
        ObservedCounts(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        ObservedCounts(-np.ones((4, 4)))
    with pytest.raises(ValueError):
        ObservedCounts(np.full((4, 4), 0.5))
    c = ObservedCounts(np.arange(16).reshape(4, 4))
    assert c.total_n == 120
    assert c.to_dict()["high-large"] == {"cq": 0, "exh": 1, "ms1": 2, "ms2": 3}
    assert ObservedCounts.zeros().empty_conditions == CONDITIONS


@pytest.mark.parametrize("kwargs", [
    dict(chains=1), dict(warmup=10), dict(draws=0), dict(target_accept=1.0),
    dict(substeps=0), dict(init_jitter=-1.0), dict(seed=-1),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        McmcConfig(**kwargs)


def test_config_defaults():
    cfg = McmcConfig()
    assert (cfg.chains, cfg.warmup, cfg.draws) == (4, 3000, 4000)


def test_likelihood_matches_scipy(counts):
    table = predict_table("main", TRUE_PARAMS)
    want = sum(stats.multinomial.logpmf(row, row.sum(), p)
               for row, p in zip(counts.counts, table))
    assert log_likelihood(TRUE_PARAMS, "main", counts) == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("variant", ["main", "no-cost", "no-uncertainty", "eer"])
def test_batch_likelihood_matches_scalar(counts, variant):
    rng = np.random.default_rng(0)
    rows = []
    for _ in range(5):
        p = ModelParams(epsilon_low=rng.uniform(0, .5), epsilon_high=rng.uniform(0, .5),
                        delta_large=rng.uniform(0, 1), delta_small=rng.uniform(0, 1),
                        alpha=rng.uniform(.5, 9), tau=rng.uniform(0, 5),
                        c=rng.uniform(.05, 1)).restricted_to(variant)
        rows.append(p)
    theta = np.stack([p.to_vector() for p in rows])
    batch = log_likelihood_batch(theta, variant, counts)
    for p, b in zip(rows, batch):
        assert b == pytest.approx(log_likelihood(p, variant, counts), rel=1e-12)


def test_likelihood_rejects_variant_violation(counts):
    with pytest.raises(ValueError):
        log_likelihood(TRUE_PARAMS, "no-cost", counts)


def test_zero_probability_with_count_is_minus_inf():
    # with a near-deterministic policy the aggregate regret underflows to 0,
    # so the eer gate puts exactly zero mass on cq
    counts = ObservedCounts(np.array([[1, 0, 0, 0]] + [[0, 0, 0, 0]] * 3))
    p = ModelParams(alpha=1000.0, tau=2.0, c=0.5)
    assert log_likelihood(p, "eer", counts) == -math.inf


def test_fixing_delta_matches_no_cost(counts):
    p = TRUE_PARAMS.restricted_to("no-cost")
    assert log_likelihood(p, "main", counts) == pytest.approx(
        log_likelihood(p, "no-cost", counts), abs=1e-12)


def test_log_prior_value():
    # uniform boxes: log(1/0.5)*2 + log(1)*2 + log(1/5) + log(1) + N(5; 5, 1)/P(alpha>0)
    want = 2 * math.log(2) + math.log(0.2) + stats.norm.logpdf(5, 5, 1) - stats.norm.logcdf(5)
    assert log_prior(TRUE_PARAMS, "main") == pytest.approx(want, abs=1e-12)
    assert log_prior(TRUE_PARAMS, "main") == pytest.approx(-1.14208, abs=1e-5)


def test_log_prior_outside_support():
    theta = TRUE_PARAMS.to_vector()[None, :].repeat(3, axis=0)
    theta[0, 0] = 0.7
    theta[1, 4] = -1.0
    lp = log_prior_batch(theta, "main")
    assert lp[0] == -math.inf and lp[1] == -math.inf and np.isfinite(lp[2])
    assert log_prior_batch(TRUE_PARAMS.to_vector(), "no-cost")[0] == -math.inf


def test_sampler_shapes_and_determinism(counts, fast_fit):
    assert fast_fit.draws.shape == (2, 300, 7)
    assert fast_fit.log_density.shape == (2, 300)
    again = sample_posterior(counts, "main", FAST)
    assert np.array_equal(fast_fit.draws, again.draws)
    other = sample_posterior(counts, "main", McmcConfig(chains=2, warmup=300, draws=300, seed=4))
    assert not np.array_equal(fast_fit.draws, other.draws)
    assert np.all((0.05 < fast_fit.accept_rate) & (fast_fit.accept_rate < 0.8))


def test_chain_prefix_invariance(counts, fast_fit):
    """Chain k depends only on its own stream, not on how many chains run."""
    four = sample_posterior(counts, "main", McmcConfig(chains=4, warmup=300, draws=300, seed=3))
    assert np.array_equal(four.draws[:2], fast_fit.draws)


def test_log_density_column_is_log_posterior(counts, fast_fit):
    x = fast_fit.draws[0, :5]
    want = log_prior_batch(x, "main") + log_likelihood_batch(x, "main", counts)
    np.testing.assert_allclose(fast_fit.log_density[0, :5], want, rtol=1e-10)


def test_draws_stay_in_support(fast_fit):
    theta = fast_fit.full_theta()
    assert np.all(theta[:, :2] >= 0) and np.all(theta[:, :2] <= 0.5)
    assert np.all(theta[:, 2:4] >= 0) and np.all(theta[:, 2:4] <= 1)
    assert np.all(theta[:, 4] > 0)


def test_reduced_variant_sampling(counts):
    s = sample_posterior(counts, "no-cost", FAST)
    assert s.draws.shape[-1] == 5
    assert np.all(s.param("delta_large") == 0)
    with pytest.raises(KeyError):
        s.param("beta")


def test_thin_to(fast_fit):
    t = fast_fit.thin_to(10)
    assert t.draws.shape == (2, 10, 7)
    assert np.array_equal(t.draws[:, 0], fast_fit.draws[:, 0])


def test_summary_roundtrip(fast_fit):
    report = summarize(fast_fit, FAST)
    assert set(report.params) == set(fast_fit.param_names)
    assert report.config["warmup"] == 300
    back = FitReport.from_dict(report.to_dict())
    assert back == report


def test_init_failure_raises():
    with pytest.raises(SamplerError):
        sample_box(lambda x: np.full(len(x), -np.inf), [0.0], [1.0],
                   lambda rng: np.array([0.5]), FAST)


def test_sample_box_matches_quadrature():
    """Two-parameter slice of the posterior against grid quadrature."""
    counts = simulate_counts(seed=2)
    fixed = TRUE_PARAMS.to_vector()

    def log_density(x):
        theta = np.repeat(fixed[None, :], len(x), axis=0)
        theta[:, 1] = x[:, 0]   # epsilon_high
        theta[:, 2] = x[:, 1]   # delta_large
        return log_prior_batch(theta, "main") + log_likelihood_batch(theta, "main", counts)

    cfg = McmcConfig(chains=4, warmup=500, draws=1500, seed=1)
    draws, _, _ = sample_box(log_density, [0.0, 0.0], [0.5, 1.0],
                             lambda rng: np.array([rng.uniform(0, .5), rng.uniform(0, 1)]), cfg)
    bins = 20
    e_edges = np.linspace(0, 0.5, bins + 1)
    d_edges = np.linspace(0, 1, bins + 1)
    hist, _, _ = np.histogram2d(draws[..., 0].ravel(), draws[..., 1].ravel(),
                                [e_edges, d_edges])
    hist /= hist.sum()
    # midpoint quadrature on a 10x finer grid, aggregated to the same bins
    fine = 10 * bins
    e = (np.arange(fine) + 0.5) * 0.5 / fine
    d = (np.arange(fine) + 0.5) / fine
    E, D = np.meshgrid(e, d, indexing="ij")
    lp = log_density(np.column_stack([E.ravel(), D.ravel()])).reshape(fine, fine)
    w = np.exp(lp - lp.max())
    w = w.reshape(bins, 10, bins, 10).sum(axis=(1, 3))
    w /= w.sum()
    tv = 0.5 * np.abs(hist - w).sum()
    assert tv < 0.1
