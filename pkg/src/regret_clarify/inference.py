"""Priors, multinomial likelihood and posterior sampling for every model variant.

The sampler is an adaptive random-walk Metropolis scheme run on an
unconstrained reparameterisation (scaled logit for box-bounded parameters,
log for ``alpha``). Each iteration sweeps one-dimensional random-walk
updates along a set of directions. During warmup the per-direction step
sizes are tuned toward ``target_accept`` every 50 iterations and the
directions are re-estimated from the chain's own warmup history (principal
axes of its covariance). Adaptation is frozen after warmup.

Chains draw from independent generators spawned from the master seed, so a
chain's draws do not depend on how many other chains run beside it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy.special import expit, gammaln, log_ndtr

from .diagnostics import effective_sample_size, split_r_hat
from .models import PARAM_BOUNDS, PARAM_NAMES, Gate, ModelVariant, parse_variant, variant_spec
from .scenario import CATEGORIES, CONDITIONS, ModelParams, _condition_columns

__all__ = [
    "ObservedCounts",
    "McmcConfig",
    "PosteriorSamples",
    "ParamSummary",
    "FitReport",
    "SamplerError",
    "log_prior",
    "log_likelihood",
    "log_prior_batch",
    "log_likelihood_batch",
    "sample_posterior",
    "sample_box",
    "summarize",
]

ALPHA_PRIOR_MEAN = 5.0
ALPHA_PRIOR_SD = 1.0
ADAPT_WINDOW = 50
MAX_INIT_ATTEMPTS = 100


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObservedCounts:
    """Response counts, one row per condition in ``CONDITIONS`` order.

    Columns follow ``CATEGORIES``: (cq, exh, ms1, ms2).
    """

    counts: np.ndarray
    conditions: tuple = CONDITIONS

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.conditions), len(CATEGORIES)):
            raise ValueError(
                f"counts must have shape ({len(self.conditions)}, {len(CATEGORIES)}),"
                f" got {counts.shape}"
            )
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "conditions", tuple(self.conditions))

    @property
    def total_n(self) -> int:
        return int(self.counts.sum())

    @property
    def per_condition_n(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def empty_conditions(self) -> tuple:
        return tuple(c for c, n in zip(self.conditions, self.per_condition_n) if n == 0)

    @classmethod
    def zeros(cls) -> "ObservedCounts":
        return cls(np.zeros((len(CONDITIONS), len(CATEGORIES)), dtype=np.int64))

    @functools.cached_property
    def _log_coef(self) -> float:
        n = self.per_condition_n
        return float((gammaln(n + 1) - gammaln(self.counts + 1).sum(axis=1)).sum())

    def log_multinomial_coefficient(self) -> float:
        return self._log_coef

    def to_dict(self) -> dict:
        return {
            c.label: dict(zip(CATEGORIES, map(int, row)))
            for c, row in zip(self.conditions, self.counts)
        }


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    warmup: int = 3000
    draws: int = 4000
    seed: int = 0
    target_accept: float = 0.3
    init_jitter: float = 0.1
    substeps: int | None = None

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("chains must be >= 2")
        if self.warmup < 100 or self.draws < 100:
            raise ValueError("warmup and draws must each be >= 100")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PosteriorSamples:
    draws: np.ndarray  # (chain, iteration, parameter)
    param_names: tuple
    log_density: np.ndarray  # (chain, iteration)
    variant: ModelVariant
    accept_rate: np.ndarray = field(default=None, repr=False)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def param(self, name: str) -> np.ndarray:
        """(chains, draws) array for one parameter; fixed ones are zeros."""
        if name in self.param_names:
            return self.draws[:, :, self.param_names.index(name)]
        if name in PARAM_NAMES:
            return np.zeros(self.draws.shape[:2])
        raise KeyError(name)

    def full_theta(self) -> np.ndarray:
        """All draws flattened to (n, 7) in ``PARAM_NAMES`` order."""
        return _expand(self.draws.reshape(-1, self.draws.shape[-1]), self.param_names)

    def thin_to(self, n: int) -> "PosteriorSamples":
        """Keep ``n`` evenly spaced iterations of every chain."""
        idx = np.unique(np.linspace(0, self.n_draws - 1, n).round().astype(int))
        acc = self.accept_rate
        return PosteriorSamples(
            self.draws[:, idx], self.param_names, self.log_density[:, idx],
            self.variant, acc,
        )


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    lower: float
    upper: float
    r_hat: float
    ess: float


@dataclass
class FitReport:
    variant: str
    seed: int
    config: dict
    params: dict  # name -> ParamSummary

    def converged(self, max_r_hat=1.01, min_ess=2000.0) -> bool:
        return all(
            math.isfinite(s.r_hat) and s.r_hat < max_r_hat
            and math.isfinite(s.ess) and s.ess > min_ess
            for s in self.params.values()
        )

    def to_dict(self) -> dict:
        return {
            "kind": "fit_report",
            "variant": self.variant,
            "seed": self.seed,
            "config": dict(self.config),
            "params": {k: asdict(v) for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, doc) -> "FitReport":
        return cls(
            variant=doc["variant"],
            seed=int(doc["seed"]),
            config=dict(doc["config"]),
            params={k: ParamSummary(**v) for k, v in doc["params"].items()},
        )


def _expand(free: np.ndarray, names) -> np.ndarray:
    full = np.zeros(free.shape[:-1] + (len(PARAM_NAMES),))
    for j, name in enumerate(names):
        full[..., PARAM_NAMES.index(name)] = free[..., j]
    return full


def _as_theta(params) -> np.ndarray:
    if isinstance(params, ModelParams):
        return params.to_vector()[None, :]
    return np.atleast_2d(np.asarray(params, dtype=float))


_LOWER = np.array([PARAM_BOUNDS[n][0] for n in PARAM_NAMES])
_UPPER = np.array([PARAM_BOUNDS[n][1] for n in PARAM_NAMES])
_ALPHA = PARAM_NAMES.index("alpha")
# log of the truncated normal's normalising mass, P(alpha > 0)
_ALPHA_LOG_MASS = float(log_ndtr(ALPHA_PRIOR_MEAN / ALPHA_PRIOR_SD))


@functools.lru_cache(maxsize=None)
def _prior_terms(variant):
    spec = variant_spec(variant)
    free = np.array([n in spec.free_parameters for n in PARAM_NAMES])
    uniform = free.copy()
    uniform[_ALPHA] = False
    const = -np.log(_UPPER[uniform] - _LOWER[uniform]).sum()
    if free[_ALPHA]:
        const -= 0.5 * np.log(2 * np.pi) + np.log(ALPHA_PRIOR_SD) + _ALPHA_LOG_MASS
    return free, uniform, float(const)


def log_prior_batch(theta, variant) -> np.ndarray:
    """Log prior of rows of full 7-vectors; ``-inf`` outside the support.

    Parameters fixed by the variant contribute nothing but must equal 0.
    """
    free, uniform, const = _prior_terms(parse_variant(variant))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    ok = np.all((theta >= _LOWER) & (theta <= _UPPER) | ~uniform, axis=1)
    ok &= np.all((theta == 0.0) | free, axis=1)
    lp = np.full(theta.shape[0], const)
    if free[_ALPHA]:
        alpha = theta[:, _ALPHA]
        ok &= alpha > 0
        z = (alpha - ALPHA_PRIOR_MEAN) / ALPHA_PRIOR_SD
        lp -= 0.5 * z * z
    return np.where(ok, lp, -np.inf)


def log_prior(params, variant) -> float:
    return float(log_prior_batch(_as_theta(params), variant)[0])


@numba.njit(cache=True)
def _loglik_row(theta, eps_col, delta_col, counts, powerlaw):
    """Sum over conditions of counts . log p for one full parameter vector.

    Counts are ordered (cq, exh, ms1, ms2). Mirrors the scenario table: prior
    (1 - eps, eps), utilities g1 -> (1, 0, 1 - delta), g2 -> (0, 1, 1 - delta).
    """
    alpha = theta[4]
    tau = theta[5]
    c = theta[6]
    util = np.empty((2, 3))
    util[0, 0] = 1.0
    util[0, 1] = 0.0
    util[1, 0] = 0.0
    util[1, 1] = 1.0
    prior = np.empty(2)
    eu = np.empty(3)
    exp_regret = np.empty(3)
    policy = np.empty(3)
    probs = np.empty(4)
    total = 0.0
    for j in range(counts.shape[0]):
        eps = theta[eps_col[j]]
        delta = theta[delta_col[j]]
        prior[0] = 1.0 - eps
        prior[1] = eps
        util[0, 2] = 1.0 - delta
        util[1, 2] = 1.0 - delta
        for a in range(3):
            eu[a] = prior[0] * util[0, a] + prior[1] * util[1, a]
        for a in range(3):
            r = 0.0
            for g in range(2):
                best_u = max(util[g, 0], max(util[g, 1], util[g, 2]))
                r += prior[g] * (best_u - util[g, a])
            exp_regret[a] = r
        top = max(eu[0], max(eu[1], eu[2]))
        norm = 0.0
        for a in range(3):
            policy[a] = np.exp(alpha * (eu[a] - top))
            norm += policy[a]
        best = 0
        for a in range(3):
            policy[a] /= norm
            if policy[a] > policy[best]:
                best = a
        if powerlaw:
            eer = 0.0
            for a in range(3):
                eer += policy[a] * exp_regret[a]
            p_cq = min(max((eer / c) ** tau, 0.0), 1.0)
        else:
            p_cq = 1.0 / (1.0 + np.exp(-tau * (exp_regret[best] - c)))
        probs[0] = p_cq
        probs[1] = (1.0 - p_cq) * policy[2]
        probs[2] = (1.0 - p_cq) * policy[0]
        probs[3] = (1.0 - p_cq) * policy[1]
        for q in range(4):
            y = counts[j, q]
            if y > 0:
                if probs[q] > 0.0:
                    total += y * np.log(probs[q])
                else:
                    return -np.inf
    if total != total:
        return -np.inf
    return total


@numba.njit(cache=True)
def _loglik_kernel(theta, eps_col, delta_col, counts, powerlaw):
    out = np.empty(theta.shape[0])
    for i in range(theta.shape[0]):
        out[i] = _loglik_row(theta[i], eps_col, delta_col, counts, powerlaw)
    return out


@numba.njit(cache=True)
def _softplus(x):
    return max(x, 0.0) + np.log1p(np.exp(-abs(x)))


@numba.njit(cache=True)
def _posterior_target(u, cols, lower, upper, prior_const, alpha_col,
                      eps_col, delta_col, counts, powerlaw, use_likelihood):
    """Fused unconstrained log target: transform, Jacobian, prior, likelihood.

    Returns (log target including Jacobian, log prior + log likelihood).
    """
    m, d = u.shape
    lp_u = np.empty(m)
    lp_x = np.empty(m)
    theta = np.zeros(7)
    for i in range(m):
        jac = 0.0
        ok = True
        for j in range(d):
            v = u[i, j]
            if np.isinf(upper[j]):
                x = np.exp(v)
                jac += v
                ok = ok and x > 0.0
            else:
                w = upper[j] - lower[j]
                x = lower[j] + w / (1.0 + np.exp(-v))
                jac += np.log(w) - _softplus(-v) - _softplus(v)
                ok = ok and lower[j] <= x <= upper[j]
            theta[cols[j]] = x
        if not ok or not np.isfinite(jac):
            lp_u[i] = -np.inf
            lp_x[i] = -np.inf
            continue
        lp = prior_const
        if alpha_col >= 0:
            z = (theta[alpha_col] - ALPHA_PRIOR_MEAN) / ALPHA_PRIOR_SD
            lp -= 0.5 * z * z
        if use_likelihood:
            lp += _loglik_row(theta, eps_col, delta_col, counts, powerlaw)
        lp_x[i] = lp
        lp_u[i] = lp + jac
    return lp_u, lp_x


def log_likelihood_batch(theta, variant, data: ObservedCounts) -> np.ndarray:
    """Multinomial log-likelihood (coefficient included) of rows of full 7-vectors."""
    theta = np.ascontiguousarray(np.atleast_2d(np.asarray(theta, dtype=float)))
    eps_col, delta_col = _condition_columns(data.conditions)
    powerlaw = variant_spec(variant).gate is Gate.POWER_LAW_ON_EER
    ll = _loglik_kernel(theta, eps_col, delta_col, data.counts, powerlaw)
    return ll + data.log_multinomial_coefficient()


def log_likelihood(params, variant, data: ObservedCounts) -> float:
    variant = parse_variant(variant)
    if isinstance(params, ModelParams):
        params.check_variant(variant)
    return float(log_likelihood_batch(_as_theta(params), variant, data)[0])


# -- unconstrained reparameterisation ---------------------------------------

class _Box:
    """Elementwise map between R^d and a product of intervals / the half-line."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.log_scale = ~np.isfinite(self.upper)
        if np.any(self.log_scale & (self.lower != 0)):
            raise ValueError("half-line parameters must have lower bound 0")
        self.width = np.where(self.log_scale, 1.0, self.upper - self.lower)

    def to_constrained(self, u):
        bounded = self.lower + self.width * expit(u)
        return np.where(self.log_scale, np.exp(u), bounded)

    def to_unconstrained(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = (x - self.lower) / self.width
            logit = np.log(p) - np.log1p(-p)
            return np.where(self.log_scale, np.log(x), logit)

    def log_jacobian(self, u):
        # log(width * s(u) * s(-u)) for logit, u for log
        bounded = np.log(self.width) - np.logaddexp(0, -u) - np.logaddexp(0, u)
        return np.where(self.log_scale, u, bounded).sum(axis=-1)


def sample_box(log_density, lower, upper, init, config: McmcConfig,
               unconstrained_target=None):
    """Adaptive random-walk Metropolis on a box-constrained target.

    Parameters
    ----------
    log_density : callable
        Maps a (chains, d) array of constrained points to (chains,) log
        densities (unnormalised; ``-inf`` outside the support).
    lower, upper : sequences of length d
        Bounds; ``upper = inf`` means a log transform (requires lower 0).
    init : callable
        ``init(rng) -> (d,)`` constrained starting point for one chain.
    config : McmcConfig
    unconstrained_target : callable, optional
        Faster drop-in for the transformed target: maps (chains, d)
        unconstrained points to ``(log target incl. Jacobian, log density)``.

    Returns
    -------
    draws : (chains, draws, d) constrained post-warmup draws
    log_dens : (chains, draws) target log density at each draw
    accept_rate : (chains,) post-warmup acceptance rate
    """
    box = _Box(lower, upper)
    d = len(box.lower)
    m = config.chains
    n_iter = config.warmup + config.draws
    substeps = config.substeps or 4 * d
    rngs = [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(int(config.seed)).spawn(m)]

    def target(u):
        lp = log_density(box.to_constrained(u))
        lp = np.where(np.isnan(lp), -np.inf, lp)
        return lp + box.log_jacobian(u), lp

    if unconstrained_target is not None:
        target = unconstrained_target  # noqa: F811

    u = np.empty((m, d))
    for i, rng in enumerate(rngs):
        for _ in range(MAX_INIT_ATTEMPTS):
            x0 = np.asarray(init(rng), dtype=float)
            u0 = box.to_unconstrained(x0) + config.init_jitter * rng.standard_normal(d)
            if np.all(np.isfinite(u0)) and np.isfinite(target(u0[None, :])[0][0]):
                u[i] = u0
                break
        else:
            raise SamplerError(
                f"chain {i}: no finite log density after {MAX_INIT_ATTEMPTS} "
                "initialisation attempts"
            )

    # proposal: u + exp(log_scale) * chol @ z, adapted per chain during warmup
    chol = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    log_scale = np.full(m, np.log(2.38 / np.sqrt(d)))
    accepts = np.zeros(m)
    post_accepts = np.zeros(m)
    history = np.empty((config.warmup, m, d))
    refit_at = {config.warmup // 4, config.warmup // 2, (3 * config.warmup) // 4}

    lp_u, lp_x = target(u)
    draws = np.empty((m, config.draws, d))
    log_dens = np.empty((m, config.draws))
    for it in range(n_iter):
        # one block of random numbers per chain per iteration, from that
        # chain's own stream
        z = np.stack([r.standard_normal((substeps, d)) for r in rngs], axis=1)
        log_u = np.log(np.stack([r.random(substeps) for r in rngs], axis=1))
        steps = np.exp(log_scale)[None, :, None] * np.einsum("mij,smj->smi", chol, z)
        n_acc = np.zeros(m)
        for k in range(substeps):
            prop = u + steps[k]
            lp_prop, lpx_prop = target(prop)
            accept = log_u[k] < lp_prop - lp_u
            u = np.where(accept[:, None], prop, u)
            lp_u = np.where(accept, lp_prop, lp_u)
            lp_x = np.where(accept, lpx_prop, lp_x)
            n_acc += accept
        if it < config.warmup:
            accepts += n_acc
            history[it] = u
            if (it + 1) % ADAPT_WINDOW == 0:
                rate = accepts / (ADAPT_WINDOW * substeps)
                log_scale += 2.0 * (rate - config.target_accept)
                accepts[:] = 0
            if it + 1 in refit_at and (it + 1) // 2 >= 2 * d:
                seg = history[(it + 1) // 2: it + 1]
                for i in range(m):
                    chol[i] = _proposal_factor(seg[:, i, :])
                log_scale[:] = np.log(2.38 / np.sqrt(d))
                accepts[:] = 0
        else:
            post_accepts += n_acc
            k = it - config.warmup
            draws[:, k] = box.to_constrained(u)
            log_dens[:, k] = lp_x
    return draws, log_dens, post_accepts / (config.draws * substeps)


def _proposal_factor(x: np.ndarray) -> np.ndarray:
    """Cholesky factor of the regularised sample covariance of ``x``."""
    n, d = x.shape
    cov = np.cov(x, rowvar=False).reshape(d, d)
    cov = (n / (n + 5.0)) * cov + 1e-3 * (5.0 / (n + 5.0)) * np.eye(d)
    return np.linalg.cholesky(cov)


def sample_posterior(data: ObservedCounts, variant, config: McmcConfig = None,
                     prior_only: bool = False) -> PosteriorSamples:
    """Draw from the posterior of ``variant`` given ``data``.

    With ``prior_only`` the likelihood is dropped and the prior is sampled,
    which is how the reparameterisation is checked.
    """
    if data is None:
        data = ObservedCounts.zeros()
    config = config or McmcConfig()
    variant = parse_variant(variant)
    spec = variant_spec(variant)
    names = spec.free_parameters
    lower = [PARAM_BOUNDS[n][0] for n in names]
    upper = [PARAM_BOUNDS[n][1] for n in names]

    def log_density(x):
        theta = _expand(x, names)
        lp = log_prior_batch(theta, variant)
        if prior_only:
            return lp
        ok = np.isfinite(lp)
        if np.any(ok):
            lp[ok] += log_likelihood_batch(theta[ok], variant, data)
        return lp

    def init(rng):
        x = np.empty(len(names))
        for j, name in enumerate(names):
            if name == "alpha":
                x[j] = ALPHA_PRIOR_MEAN
            else:
                lo, hi = PARAM_BOUNDS[name]
                x[j] = rng.uniform(lo, hi)
        return x

    _, _, const = _prior_terms(variant)
    cols = np.array([PARAM_NAMES.index(n) for n in names])
    alpha_col = PARAM_NAMES.index("alpha") if "alpha" in names else -1
    eps_col, delta_col = _condition_columns(data.conditions)
    powerlaw = spec.gate is Gate.POWER_LAW_ON_EER
    coef = 0.0 if prior_only else data.log_multinomial_coefficient()
    lower_a, upper_a = np.array(lower), np.array(upper)

    def fused(u):
        lp_u, lp_x = _posterior_target(
            np.ascontiguousarray(u), cols, lower_a, upper_a, const, alpha_col,
            eps_col, delta_col, data.counts, powerlaw, not prior_only,
        )
        return lp_u + coef, lp_x + coef

    draws, log_dens, acc = sample_box(log_density, lower, upper, init, config,
                                      unconstrained_target=fused)
    return PosteriorSamples(draws, names, log_dens, variant, acc)


def summarize(samples: PosteriorSamples, config: McmcConfig) -> FitReport:
    params = {}
    for name in samples.param_names:
        x = samples.param(name)
        lo, hi = np.percentile(x, [2.5, 97.5])
        params[name] = ParamSummary(
            mean=float(x.mean()),
            lower=float(lo),
            upper=float(hi),
            r_hat=split_r_hat(x),
            ess=effective_sample_size(x),
        )
    return FitReport(samples.variant.value, int(config.seed), config.to_dict(), params)
