"""Registry of model variants: which parameters are free and which gate is used."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelVariant",
    "Gate",
    "VariantSpec",
    "PARAM_NAMES",
    "PARAM_BOUNDS",
    "variant_spec",
    "parse_variant",
]

PARAM_NAMES = (
    "epsilon_low",
    "epsilon_high",
    "delta_large",
    "delta_small",
    "alpha",
    "tau",
    "c",
)

# closed bounds; alpha is open at 0 and unbounded above
PARAM_BOUNDS = {
    "epsilon_low": (0.0, 0.5),
    "epsilon_high": (0.0, 0.5),
    "delta_large": (0.0, 1.0),
    "delta_small": (0.0, 1.0),
    "alpha": (0.0, np.inf),
    "tau": (0.0, 5.0),
    "c": (0.0, 1.0),
}


class ModelVariant(str, enum.Enum):
    MAIN = "main"
    NO_DELTA_COST = "no-cost"
    NO_EPSILON_UNCERTAINTY = "no-uncertainty"
    EER = "eer"


class Gate(str, enum.Enum):
    LOGISTIC_ON_BEST = "logistic"
    POWER_LAW_ON_EER = "powerlaw"


@dataclass(frozen=True)
class VariantSpec:
    variant: ModelVariant
    free_parameters: tuple
    gate: Gate

    @property
    def fixed_parameters(self) -> tuple:
        return tuple(p for p in PARAM_NAMES if p not in self.free_parameters)

    @property
    def dim(self) -> int:
        return len(self.free_parameters)


_ALL = PARAM_NAMES
_NO_DELTA = tuple(p for p in PARAM_NAMES if not p.startswith("delta"))
_NO_EPS = tuple(p for p in PARAM_NAMES if not p.startswith("epsilon"))

_REGISTRY = {
    ModelVariant.MAIN: VariantSpec(ModelVariant.MAIN, _ALL, Gate.LOGISTIC_ON_BEST),
    ModelVariant.NO_DELTA_COST: VariantSpec(
        ModelVariant.NO_DELTA_COST, _NO_DELTA, Gate.LOGISTIC_ON_BEST
    ),
    ModelVariant.NO_EPSILON_UNCERTAINTY: VariantSpec(
        ModelVariant.NO_EPSILON_UNCERTAINTY, _NO_EPS, Gate.LOGISTIC_ON_BEST
    ),
    ModelVariant.EER: VariantSpec(ModelVariant.EER, _ALL, Gate.POWER_LAW_ON_EER),
}

_ALIASES = {
    "main": ModelVariant.MAIN,
    "no-cost": ModelVariant.NO_DELTA_COST,
    "nodeltacost": ModelVariant.NO_DELTA_COST,
    "no-delta": ModelVariant.NO_DELTA_COST,
    "no-uncertainty": ModelVariant.NO_EPSILON_UNCERTAINTY,
    "noepsilonuncertainty": ModelVariant.NO_EPSILON_UNCERTAINTY,
    "no-epsilon": ModelVariant.NO_EPSILON_UNCERTAINTY,
    "eer": ModelVariant.EER,
}


def parse_variant(value) -> ModelVariant:
    """Accept a :class:`ModelVariant` or one of its CLI names."""
    if isinstance(value, ModelVariant):
        return value
    key = str(value).strip().lower().replace("_", "-")
    if key in _ALIASES:
        return _ALIASES[key]
    key = key.replace("-", "")
    if key in _ALIASES:
        return _ALIASES[key]
    raise ValueError(
        f"unknown model {value!r}; expected one of main, no-cost, no-uncertainty, eer"
    )


def variant_spec(variant) -> VariantSpec:
    return _REGISTRY[parse_variant(variant)]
