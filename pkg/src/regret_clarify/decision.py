"""Layered expected-regret decision model over finite decision problems.

An agent holding a belief over goals either asks a clarification question
(CQ) or acts under a softmax policy over the direct actions. The CQ
probability is a monotone function of the expected regret of the policy's
best action.

All functions are pure. The scalar API works on a single
:class:`DecisionProblem`; :func:`batch_response` evaluates many problems of
the same shape at once and is what the likelihood uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "DecisionProblem",
    "PolicyEvaluation",
    "ResponseDistribution",
    "expected_utility",
    "softmax_policy",
    "regret_matrix",
    "expected_regret",
    "cq_probability_logistic",
    "cq_probability_powerlaw",
    "evaluate_policy",
    "response_distribution",
    "eer_aggregate",
    "batch_response",
]

PRIOR_ATOL = 1e-9


@dataclass(frozen=True)
class DecisionProblem:
    """Goals with a prior, actions, and a goal x action utility table."""

    goal_ids: tuple
    goal_prior: np.ndarray
    action_ids: tuple
    utilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        prior = np.asarray(self.goal_prior, dtype=float)
        utils = np.asarray(self.utilities, dtype=float)
        goals = tuple(self.goal_ids)
        actions = tuple(self.action_ids)
        if len(goals) < 1:
            raise ValueError("a decision problem needs at least one goal")
        if len(actions) < 2:
            raise ValueError("a decision problem needs at least two actions")
        if prior.shape != (len(goals),):
            raise ValueError(
                f"goal_prior has shape {prior.shape}, expected ({len(goals)},)"
            )
        if utils.shape != (len(goals), len(actions)):
            raise ValueError(
                f"utilities has shape {utils.shape}, "
                f"expected ({len(goals)}, {len(actions)})"
            )
        if not np.all(np.isfinite(utils)):
            raise ValueError("utilities must be finite")
        if np.any(prior < 0) or np.any(prior > 1):
            raise ValueError("goal_prior entries must lie in [0, 1]")
        if abs(prior.sum() - 1.0) > PRIOR_ATOL:
            raise ValueError(f"goal_prior sums to {prior.sum()!r}, not 1")
        prior.setflags(write=False)
        utils.setflags(write=False)
        object.__setattr__(self, "goal_ids", goals)
        object.__setattr__(self, "action_ids", actions)
        object.__setattr__(self, "goal_prior", prior)
        object.__setattr__(self, "utilities", utils)

    @property
    def n_goals(self) -> int:
        return len(self.goal_ids)

    @property
    def n_actions(self) -> int:
        return len(self.action_ids)

    def action_index(self, action) -> int:
        """Resolve an action label or integer index to an index."""
        if isinstance(action, (int, np.integer)) and not isinstance(action, bool):
            if not 0 <= action < self.n_actions:
                raise IndexError(f"action index {action} out of range")
            return int(action)
        try:
            return self.action_ids.index(action)
        except ValueError:
            raise KeyError(f"unknown action {action!r}") from None


@dataclass(frozen=True)
class PolicyEvaluation:
    eu: np.ndarray
    policy: np.ndarray
    best_action: int
    regret: np.ndarray
    exp_regret: np.ndarray


@dataclass(frozen=True)
class ResponseDistribution:
    """Probability of asking plus the probability of each direct action."""

    p_cq: float
    p_action: np.ndarray
    action_ids: tuple = ()

    def as_dict(self) -> dict:
        out = {"cq": float(self.p_cq)}
        labels = self.action_ids or tuple(range(len(self.p_action)))
        for label, p in zip(labels, self.p_action):
            out[label] = float(p)
        return out


def expected_utility(dp: DecisionProblem) -> np.ndarray:
    return dp.goal_prior @ dp.utilities


def softmax_policy(eu: Sequence[float], alpha: float) -> np.ndarray:
    """Softmax of ``alpha * eu``, computed with max-subtraction."""
    eu = np.asarray(eu, dtype=float)
    if not np.all(np.isfinite(eu)):
        raise ValueError("expected utilities must be finite")
    if not alpha >= 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha!r}")
    z = alpha * eu
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def regret_matrix(dp: DecisionProblem) -> np.ndarray:
    u = dp.utilities
    return u.max(axis=1, keepdims=True) - u


def expected_regret(dp: DecisionProblem, action) -> float:
    a = dp.action_index(action)
    return float(dp.goal_prior @ regret_matrix(dp)[:, a])


def cq_probability_logistic(exp_regret_best, tau, c):
    """Logistic gate ``1 / (1 + exp(-tau * (x - c)))``."""
    return expit(tau * (np.asarray(exp_regret_best, dtype=float) - c))


def cq_probability_powerlaw(eer, tau, c):
    """Power-law gate ``clip((eer / c) ** tau, 0, 1)``.

    Raises ``ValueError`` when ``c`` is zero or ``eer`` is negative.
    """
    c = np.asarray(c, dtype=float)
    eer = np.asarray(eer, dtype=float)
    if np.any(c <= 0):
        raise ValueError("power-law gate needs c > 0")
    if np.any(eer < 0):
        raise ValueError("aggregate expected regret must be nonnegative")
    return np.clip((eer / c) ** tau, 0.0, 1.0)


def evaluate_policy(dp: DecisionProblem, alpha: float) -> PolicyEvaluation:
    eu = expected_utility(dp)
    policy = softmax_policy(eu, alpha)
    regret = regret_matrix(dp)
    exp_regret = dp.goal_prior @ regret
    # np.argmax returns the lowest index among ties
    best = int(np.argmax(policy))
    return PolicyEvaluation(eu, policy, best, regret, exp_regret)


def response_distribution(
    dp: DecisionProblem, alpha: float, tau: float, c: float
) -> ResponseDistribution:
    ev = evaluate_policy(dp, alpha)
    p_cq = float(cq_probability_logistic(ev.exp_regret[ev.best_action], tau, c))
    return ResponseDistribution(p_cq, (1.0 - p_cq) * ev.policy, dp.action_ids)


def eer_aggregate(dp: DecisionProblem, alpha: float) -> float:
    """Policy-weighted average of every action's expected regret."""
    ev = evaluate_policy(dp, alpha)
    return float(ev.policy @ ev.exp_regret)


def batch_response(prior, utilities, alpha, tau, c, gate="logistic"):
    """Vectorised response distribution over a batch of same-shape problems.

    Parameters
    ----------
    prior : array, shape (..., G)
    utilities : array, shape (..., G, A)
    alpha, tau, c : arrays broadcastable to the batch shape ``...``
    gate : {"logistic", "powerlaw"}
        ``"logistic"`` gates on the expected regret of the best action,
        ``"powerlaw"`` on the policy-weighted expected regret.

    Returns
    -------
    p_cq : array, shape (...)
    p_action : array, shape (..., A)

    Inputs are not validated; callers pass well-formed problems.
    """
    prior = np.asarray(prior, dtype=float)
    utilities = np.asarray(utilities, dtype=float)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    weighted = prior[..., :, None] * utilities
    eu = weighted.sum(axis=-2)
    z = alpha * eu
    z -= z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    policy = w / w.sum(axis=-1, keepdims=True)
    # sum_g P(g) (max_a U(g, a) - U(g, a))
    exp_regret = (prior * utilities.max(axis=-1)).sum(axis=-1)[..., None] - eu
    if gate == "logistic":
        best = np.argmax(policy, axis=-1)[..., None]
        x = np.take_along_axis(exp_regret, best, axis=-1)[..., 0]
        p_cq = expit(tau * (x - c))
    elif gate == "powerlaw":
        eer = (policy * exp_regret).sum(axis=-1)
        p_cq = np.clip((eer / c) ** tau, 0.0, 1.0)
    else:
        raise ValueError(f"unknown gate {gate!r}")
    return p_cq, (1.0 - p_cq)[..., None] * policy
