"""Posterior predictive checks, PSIS leave-one-out and model comparison."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaln, logsumexp, xlogy

from .inference import ObservedCounts, PosteriorSamples
from .scenario import CATEGORIES, predict_batch

__all__ = [
    "Statistic",
    "PpcReport",
    "LooReport",
    "ModelComparison",
    "posterior_predictive",
    "bpppv",
    "observation_index",
    "pointwise_log_likelihood",
    "psis_loo",
    "compare_models",
    "K_THRESHOLD",
]

K_THRESHOLD = 0.7
MIN_LOO_DRAWS = 5


class Statistic(str, enum.Enum):
    BINOMIAL_CQ = "binomial-cq"
    MULTINOMIAL = "multinomial"

    @classmethod
    def parse(cls, value) -> "Statistic":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"binomialcq": "binomial-cq", "binomial": "binomial-cq"}
        return cls(aliases.get(key.replace("-", ""), key))


@dataclass
class PpcReport:
    conditions: list
    categories: list
    mean: np.ndarray  # (conditions, categories)
    lower: np.ndarray
    upper: np.ndarray
    bpppv: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "ppc_report",
            "conditions": list(self.conditions),
            "categories": list(self.categories),
            "mean": self.mean.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "bpppv": dict(self.bpppv),
        }

    @classmethod
    def from_dict(cls, doc) -> "PpcReport":
        return cls(
            list(doc["conditions"]), list(doc["categories"]),
            np.array(doc["mean"], dtype=float), np.array(doc["lower"], dtype=float),
            np.array(doc["upper"], dtype=float), dict(doc.get("bpppv", {})),
        )

    def rows(self):
        """Flat records (condition, category, mean, lower, upper) for plotting."""
        for i, cond in enumerate(self.conditions):
            for j, cat in enumerate(self.categories):
                yield cond, cat, self.mean[i, j], self.lower[i, j], self.upper[i, j]


@dataclass
class LooReport:
    elpd: float
    elpd_se: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    n_flagged: int
    degenerate: np.ndarray = None

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.pointwise), dtype=bool)

    @property
    def n_obs(self) -> int:
        return len(self.pointwise)

    def to_dict(self) -> dict:
        return {
            "kind": "loo_report",
            "elpd": self.elpd,
            "elpd_se": self.elpd_se,
            "n_flagged": self.n_flagged,
            "pointwise": self.pointwise.tolist(),
            "pareto_k": self.pareto_k.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "LooReport":
        return cls(
            float(doc["elpd"]), float(doc["elpd_se"]),
            np.array(doc["pointwise"], dtype=float),
            np.array([np.nan if k is None else k for k in doc["pareto_k"]], dtype=float),
            int(doc["n_flagged"]),
            np.array(doc.get("degenerate", [False] * len(doc["pointwise"])), dtype=bool),
        )


@dataclass(frozen=True)
class ModelComparison:
    delta_elpd: float
    se_delta: float
    z: float
    p: float
    n: int

    @property
    def zero_se(self) -> bool:
        return self.se_delta == 0.0

    def to_dict(self) -> dict:
        return {"kind": "comparison", "delta_elpd": self.delta_elpd,
                "se_delta": self.se_delta, "z": self.z, "p": self.p, "n": self.n,
                "zero_se": self.zero_se}


def _predictions(samples: PosteriorSamples, conditions) -> np.ndarray:
    if samples.draws.size == 0:
        raise ValueError("posterior samples are empty")
    with np.errstate(divide="ignore", invalid="ignore"):
        return predict_batch(samples.variant, samples.full_theta(), conditions)


def posterior_predictive(samples: PosteriorSamples, conditions=None) -> PpcReport:
    """Mean and central 95% interval of the predicted response proportions."""
    from .scenario import CONDITIONS

    conditions = tuple(conditions or CONDITIONS)
    probs = _predictions(samples, conditions)
    lower, upper = np.percentile(probs, [2.5, 97.5], axis=0)
    return PpcReport(
        [c.label for c in conditions], list(CATEGORIES),
        probs.mean(axis=0), lower, upper,
    )


def _binomial_cq_stat(y, n, probs):
    y_cq = y[..., 0]
    coef = gammaln(n + 1) - gammaln(y_cq + 1) - gammaln(n - y_cq + 1)
    p = probs[..., 0]
    ll = coef + xlogy(y_cq, p) + xlogy(n - y_cq, 1.0 - p)
    return ll.sum(axis=-1)


def _multinomial_stat(y, n, probs):
    coef = gammaln(n + 1) - gammaln(y + 1).sum(axis=-1)
    return (coef + xlogy(y, probs).sum(axis=-1)).sum(axis=-1)


def bpppv(samples: PosteriorSamples, data: ObservedCounts, statistic="binomial-cq",
          seed=0) -> float:
    """Bayesian posterior predictive p-value, ``P(T(y_rep) <= T(y))``.

    One replicate dataset with the observed per-condition totals is drawn per
    posterior draw. Values near 0.5 mean the data look typical under the
    model; values near 0 mean the observed data are unusually improbable.

    Parameters
    ----------
    statistic : {"binomial-cq", "multinomial"}
        Log binomial likelihood of CQ-vs-other counts, or the full
        multinomial log-likelihood.
    seed : int
        Seeds the replicate simulation; independent of the fitting seed.
    """
    stat = Statistic.parse(statistic)
    probs = _predictions(samples, data.conditions)
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum(axis=-1, keepdims=True)
    n = data.per_condition_n
    rng = np.random.default_rng(seed)
    y_rep = rng.multinomial(n, probs)
    y_obs = np.broadcast_to(data.counts, y_rep.shape)
    fn = _binomial_cq_stat if stat is Statistic.BINOMIAL_CQ else _multinomial_stat
    with np.errstate(divide="ignore", invalid="ignore"):
        t_obs = fn(y_obs, n, probs)
        t_rep = fn(y_rep, n, probs)
    return float(np.mean(t_rep <= t_obs))


def observation_index(data: ObservedCounts):
    """(condition index, category index) of each participant-trial observation.

    Observations are enumerated condition by condition, category by category.
    """
    flat = data.counts.ravel()
    cells = np.repeat(np.arange(flat.size), flat)
    return np.divmod(cells, len(CATEGORIES))


def pointwise_log_likelihood(samples: PosteriorSamples, data: ObservedCounts) -> np.ndarray:
    """(draws, observations) log probability of each observed response."""
    cond, cat = observation_index(data)
    probs = _predictions(samples, data.conditions)
    with np.errstate(divide="ignore"):
        return np.log(probs[:, cond, cat])


def _gpd_fit(x: np.ndarray):
    """Shape and scale of a generalized Pareto fit to sorted exceedances.

    Empirical-Bayes estimator of Zhang & Stephens with a weak prior pulling
    the shape toward 0.5.
    """
    n = len(x)
    prior_bs, prior_k = 3, 10
    m_est = 30 + int(n ** 0.5)
    b = 1 - np.sqrt(m_est / (np.arange(1, m_est + 1, dtype=float) - 0.5))
    b /= prior_bs * x[int(n / 4 + 0.5) - 1]
    b += 1 / x[-1]
    k = np.log1p(-b[:, None] * x).mean(axis=1)
    len_scale = n * (np.log(-(b / k)) - k - 1)
    with np.errstate(over="ignore"):
        # overflow gives weight 0, which is the right limit
        weights = 1 / np.exp(len_scale - len_scale[:, None]).sum(axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    weights, b = weights[keep], b[keep]
    weights /= weights.sum()
    b_post = np.sum(b * weights)
    k_post = np.log1p(-b_post * x).mean()
    sigma = -k_post / b_post
    k_post = (n * k_post + prior_k * 0.5) / (n + prior_k)
    return k_post, sigma


def _gpd_quantile(p, k, sigma):
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def _psis_column(ll: np.ndarray):
    """Returns (elpd_i, k_hat, degenerate) for one observation's log-likelihoods."""
    s = len(ll)
    if np.all(ll == ll[0]):
        return float(ll[0]), float("nan"), True
    lw = -ll
    lw = lw - lw.max()
    tail_len = int(math.ceil(min(0.2 * s, 3 * math.sqrt(s))))
    order = np.argsort(lw, kind="stable")
    cutoff = lw[order[-tail_len - 1]]
    tail_idx = np.flatnonzero(lw > cutoff)
    if len(tail_idx) <= 4:
        k = float("inf")
    else:
        tail_idx = tail_idx[np.argsort(lw[tail_idx], kind="stable")]
        exp_cut = math.exp(cutoff)
        exceed = np.exp(lw[tail_idx]) - exp_cut
        k, sigma = _gpd_fit(exceed)
        if np.isfinite(k) and sigma > 0:
            probs = np.arange(0.5, len(tail_idx)) / len(tail_idx)
            smoothed = np.log(_gpd_quantile(probs, k, sigma) + exp_cut)
            lw = lw.copy()
            lw[tail_idx] = np.minimum(smoothed, 0.0)
    elpd = logsumexp(lw + ll) - logsumexp(lw)
    return float(elpd), float(k), False


def psis_loo(pointwise: np.ndarray) -> LooReport:
    """Pareto-smoothed importance-sampling leave-one-out from a (draws, obs) matrix.

    Identical columns (the same response in the same condition) share one
    computation.
    """
    ll = np.asarray(pointwise, dtype=float)
    if ll.ndim != 2:
        raise ValueError("pointwise log-likelihood must be a (draws, observations) matrix")
    s, n = ll.shape
    if s < MIN_LOO_DRAWS:
        raise ValueError(f"psis_loo needs at least {MIN_LOO_DRAWS} draws, got {s}")
    if n == 0:
        raise ValueError("psis_loo needs at least one observation")
    elpd_i = np.empty(n)
    k_hat = np.empty(n)
    degenerate = np.zeros(n, dtype=bool)
    seen = {}
    cols = np.asfortranarray(ll)
    for i in range(n):
        key = cols[:, i].tobytes()
        if key not in seen:
            seen[key] = _psis_column(cols[:, i])
        elpd_i[i], k_hat[i], degenerate[i] = seen[key]
    with np.errstate(invalid="ignore"):
        n_flagged = int(np.sum(k_hat > K_THRESHOLD))
    return LooReport(
        elpd=float(elpd_i.sum()),
        elpd_se=float(math.sqrt(n * elpd_i.var())),
        pointwise=elpd_i,
        pareto_k=k_hat,
        n_flagged=n_flagged,
        degenerate=degenerate,
    )


def compare_models(a: LooReport, b: LooReport) -> ModelComparison:
    """Paired z-test on pointwise elpd differences (``a`` minus ``b``)."""
    if a.n_obs != b.n_obs:
        raise ValueError(
            f"reports cover different observation counts ({a.n_obs} vs {b.n_obs})"
        )
    diff = a.pointwise - b.pointwise
    n = len(diff)
    delta = float(diff.sum())
    se = float(math.sqrt(n * diff.var()))
    if se <= 1e-12 * max(1.0, abs(delta)):
        # differences constant up to rounding
        se = 0.0
    if se > 0:
        z = delta / se
    elif delta == 0:
        z = 0.0
    else:
        z = math.copysign(math.inf, delta)
    p = float(erfc(abs(z) / math.sqrt(2)))
    return ModelComparison(delta, se, z, p, n)
