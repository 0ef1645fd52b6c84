"""The 2 x 2 experiment as parameterised decision problems.

Each condition crosses goal uncertainty (High/Low) with the size of the
option space (Large/Small). Uncertainty sets the prior ``(1 - eps, eps)``
over two goals and the option space sets the cost ``delta`` of the
exhaustive answer::

           P(g)     ms1   ms2   exh
    g1     1 - eps   1     0    1 - delta
    g2     eps       0     1    1 - delta
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .decision import (
    DecisionProblem,
    ResponseDistribution,
    batch_response,
    cq_probability_powerlaw,
    evaluate_policy,
    response_distribution,
)
from .models import PARAM_BOUNDS, PARAM_NAMES, Gate, parse_variant, variant_spec

__all__ = [
    "Uncertainty",
    "OptionSpace",
    "Condition",
    "CONDITIONS",
    "CATEGORIES",
    "ACTIONS",
    "ModelParams",
    "build_dp",
    "predict",
    "predict_table",
    "predict_batch",
]

ACTIONS = ("ms1", "ms2", "exh")
# response order used in every table and count vector
CATEGORIES = ("cq", "exh", "ms1", "ms2")
_ACTION_TO_CATEGORY = [CATEGORIES.index(a) for a in ACTIONS]


class Uncertainty(str, enum.Enum):
    HIGH = "high"
    LOW = "low"


class OptionSpace(str, enum.Enum):
    LARGE = "large"
    SMALL = "small"


def _enum_value(v):
    return v.value if isinstance(v, enum.Enum) else str(v).strip().lower()


@dataclass(frozen=True)
class Condition:
    uncertainty: Uncertainty
    option_space: OptionSpace

    def __post_init__(self):
        object.__setattr__(self, "uncertainty", Uncertainty(_enum_value(self.uncertainty)))
        object.__setattr__(self, "option_space", OptionSpace(_enum_value(self.option_space)))

    @property
    def label(self) -> str:
        return f"{self.uncertainty.value}-{self.option_space.value}"

    @classmethod
    def from_label(cls, label: str) -> "Condition":
        u, _, s = label.strip().lower().partition("-")
        return cls(Uncertainty(u), OptionSpace(s))

    def __str__(self):
        return self.label


CONDITIONS = (
    Condition(Uncertainty.HIGH, OptionSpace.LARGE),
    Condition(Uncertainty.LOW, OptionSpace.LARGE),
    Condition(Uncertainty.HIGH, OptionSpace.SMALL),
    Condition(Uncertainty.LOW, OptionSpace.SMALL),
)


@dataclass(frozen=True)
class ModelParams:
    """The seven model scalars. Bounds are checked on construction."""

    epsilon_low: float = 0.0
    epsilon_high: float = 0.0
    delta_large: float = 0.0
    delta_small: float = 0.0
    alpha: float = 5.0
    tau: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            lo, hi = PARAM_BOUNDS[name]
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if name == "alpha":
                if not value > lo:
                    raise ValueError(f"alpha must be > 0, got {value!r}")
            elif not lo <= value <= hi:
                raise ValueError(f"{name}={value!r} outside [{lo}, {hi}]")

    @classmethod
    def from_mapping(cls, mapping) -> "ModelParams":
        unknown = set(mapping) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})

    @classmethod
    def from_vector(cls, values, names=PARAM_NAMES) -> "ModelParams":
        return cls(**{n: float(v) for n, v in zip(names, values)})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_vector(self, names=PARAM_NAMES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=float)

    def check_variant(self, variant) -> None:
        """Raise ``ValueError`` if a parameter the variant fixes at 0 is nonzero."""
        spec = variant_spec(variant)
        bad = [n for n in spec.fixed_parameters if getattr(self, n) != 0.0]
        if bad:
            raise ValueError(
                f"model {spec.variant.value} fixes {', '.join(bad)} at 0"
            )
        if spec.gate is Gate.POWER_LAW_ON_EER and self.c <= 0:
            raise ValueError("the eer model needs c > 0")

    def restricted_to(self, variant) -> "ModelParams":
        """Copy with the variant's fixed parameters set to 0."""
        spec = variant_spec(variant)
        return ModelParams(**{
            n: (0.0 if n in spec.fixed_parameters else getattr(self, n))
            for n in PARAM_NAMES
        })


def _condition_values(condition: Condition, eps_low, eps_high, d_large, d_small):
    eps = eps_high if condition.uncertainty is Uncertainty.HIGH else eps_low
    delta = d_large if condition.option_space is OptionSpace.LARGE else d_small
    return eps, delta


def build_dp(condition: Condition, params: ModelParams) -> DecisionProblem:
    eps, delta = _condition_values(
        condition, params.epsilon_low, params.epsilon_high,
        params.delta_large, params.delta_small,
    )
    utilities = [[1.0, 0.0, 1.0 - delta], [0.0, 1.0, 1.0 - delta]]
    return DecisionProblem(("g1", "g2"), [1.0 - eps, eps], ACTIONS, utilities)


def predict(variant, params: ModelParams, condition: Condition) -> ResponseDistribution:
    """Response distribution of one condition; ``p_action`` is in ``ACTIONS`` order."""
    variant = parse_variant(variant)
    params.check_variant(variant)
    dp = build_dp(condition, params)
    if variant_spec(variant).gate is Gate.LOGISTIC_ON_BEST:
        return response_distribution(dp, params.alpha, params.tau, params.c)
    ev = evaluate_policy(dp, params.alpha)
    eer = float(ev.policy @ ev.exp_regret)
    p_cq = float(cq_probability_powerlaw(eer, params.tau, params.c))
    return ResponseDistribution(p_cq, (1.0 - p_cq) * ev.policy, dp.action_ids)


def predict_table(variant, params: ModelParams, conditions=CONDITIONS) -> np.ndarray:
    """Rows are conditions, columns are ``CATEGORIES`` (cq, exh, ms1, ms2)."""
    rows = []
    for cond in conditions:
        rd = predict(variant, params, cond)
        row = np.empty(len(CATEGORIES))
        row[0] = rd.p_cq
        row[_ACTION_TO_CATEGORY] = rd.p_action
        rows.append(row)
    return np.array(rows)


def predict_batch(variant, theta, conditions=CONDITIONS) -> np.ndarray:
    """Predictions for many full parameter vectors at once.

    Parameters
    ----------
    variant : ModelVariant or name
    theta : array, shape (n, 7)
        Rows in ``PARAM_NAMES`` order. Not bounds-checked.

    Returns
    -------
    array, shape (n, len(conditions), 4) in ``CATEGORIES`` order.
    """
    gate = variant_spec(variant).gate.value
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    eps_col, delta_col = _condition_columns(conditions)
    eps = theta[:, eps_col]
    n, k = eps.shape
    prior = np.empty((n, k, 2))
    prior[..., 0] = 1.0 - eps
    prior[..., 1] = eps
    utilities = np.empty((n, k, 2, 3))
    utilities[..., :2] = _MS_UTILITIES
    utilities[..., 2] = (1.0 - theta[:, delta_col])[..., None]
    p_cq, p_action = batch_response(
        prior, utilities, theta[:, 4:5], theta[:, 5:6], theta[:, 6:7], gate
    )
    out = np.empty((n, k, len(CATEGORIES)))
    out[..., 0] = p_cq
    out[..., _ACTION_TO_CATEGORY] = p_action
    return out


_MS_UTILITIES = np.eye(2)


@functools.lru_cache(maxsize=None)
def _condition_columns(conditions):
    eps_col = [PARAM_NAMES.index("epsilon_high" if c.uncertainty is Uncertainty.HIGH
                                 else "epsilon_low") for c in conditions]
    delta_col = [PARAM_NAMES.index("delta_large" if c.option_space is OptionSpace.LARGE
                                   else "delta_small") for c in conditions]
    return np.array(eps_col), np.array(delta_col)
