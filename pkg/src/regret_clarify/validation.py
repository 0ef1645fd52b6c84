"""Input coercion shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .data_io import RESPONSES, ResponseRecord, aggregate_counts
from .inference import ObservedCounts
from .scenario import CATEGORIES, CONDITIONS, Condition

__all__ = ["check_conditions", "check_responses", "check_counts", "counts_from_xy"]


def _one_condition(entry) -> Condition:
    if isinstance(entry, Condition):
        return entry
    if isinstance(entry, str):
        return Condition.from_label(entry)
    if isinstance(entry, (int, np.integer)) and not isinstance(entry, bool):
        if not 0 <= entry < len(CONDITIONS):
            raise ValueError(f"condition index {entry} out of range")
        return CONDITIONS[int(entry)]
    seq = list(entry)
    if len(seq) != 2:
        raise ValueError(f"cannot read a condition from {entry!r}")
    return Condition(str(seq[0]).lower(), str(seq[1]).lower())


def check_conditions(X) -> tuple:
    """Coerce ``X`` to a tuple of conditions.

    Accepts condition objects, labels such as ``"high-large"``, integer
    indices into the canonical order, or ``(uncertainty, option_space)``
    pairs (for example a 2-column array).
    """
    if X is None:
        return CONDITIONS
    if isinstance(X, (Condition, str)):
        X = [X]
    if isinstance(X, np.ndarray) and X.ndim == 0:
        X = [X.item()]
    try:
        return tuple(_one_condition(x) for x in X)
    except (TypeError, KeyError) as exc:
        raise ValueError(f"invalid condition input: {exc}") from exc


def check_responses(y) -> np.ndarray:
    """Category indices (into ``CATEGORIES``) of response labels.

    Both CSV labels (``ms_preferred``) and count-column names (``ms1``)
    are accepted.
    """
    out = []
    for label in np.asarray(y, dtype=object).ravel():
        key = str(label).strip().lower()
        key = RESPONSES.get(key, key)
        if key not in CATEGORIES:
            raise ValueError(f"unknown response {label!r}")
        out.append(CATEGORIES.index(key))
    return np.array(out, dtype=np.int64)


def counts_from_xy(X, y) -> ObservedCounts:
    conds = check_conditions(X)
    cats = check_responses(y)
    if len(conds) != len(cats):
        raise ValueError(f"X has {len(conds)} rows but y has {len(cats)}")
    counts = np.zeros((len(CONDITIONS), len(CATEGORIES)), dtype=np.int64)
    row_of = {c: i for i, c in enumerate(CONDITIONS)}
    for cond, cat in zip(conds, cats):
        counts[row_of[cond], cat] += 1
    return ObservedCounts(counts)


def check_counts(X) -> ObservedCounts:
    """Counts from an ``ObservedCounts``, a (4, 4) array, or response records."""
    if isinstance(X, ObservedCounts):
        return X
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], ResponseRecord):
        return aggregate_counts(X)
    arr = np.asarray(X)
    if arr.shape != (len(CONDITIONS), len(CATEGORIES)):
        raise ValueError(
            f"expected counts of shape ({len(CONDITIONS)}, {len(CATEGORIES)}), "
            f"got {arr.shape}"
        )
    return ObservedCounts(arr)
