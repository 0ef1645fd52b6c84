"""Response CSV ingestion, count aggregation and report/sample serialization.

Formats
-------
responses CSV
    ``subject_id,uncertainty,option_space,response,item``; enum values are
    case-insensitive on read and lowercase on write.
samples CSV
    ``chain,iteration,<free parameters...>,log_density``.
report JSON
    one document per report with ``"schema_version": "1"``. Non-finite
    floats become ``null`` plus a ``<key>_nonfinite`` companion field.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .inference import ObservedCounts, PosteriorSamples
from .models import parse_variant, variant_spec
from .scenario import CATEGORIES, CONDITIONS, Condition, ModelParams

__all__ = [
    "DataFormatError",
    "EmptyConditionWarning",
    "ResponseRecord",
    "RESPONSES",
    "CSV_COLUMNS",
    "SCHEMA_VERSION",
    "parse_responses_csv",
    "write_responses_csv",
    "aggregate_counts",
    "write_samples_csv",
    "read_samples_csv",
    "write_report_json",
    "read_report_json",
    "load_mapping",
    "load_params",
    "load_scenario",
]

CSV_COLUMNS = ("subject_id", "uncertainty", "option_space", "response", "item")
SCHEMA_VERSION = "1"

# response label -> count column
RESPONSES = {
    "cq": "cq",
    "exhaustive": "exh",
    "ms_preferred": "ms1",
    "ms_dispreferred": "ms2",
}
_CATEGORY_TO_RESPONSE = {v: k for k, v in RESPONSES.items()}
_ENUMS = {
    "uncertainty": ("high", "low"),
    "option_space": ("large", "small"),
    "response": tuple(RESPONSES),
}


class DataFormatError(ValueError):
    """Malformed input; ``row`` and ``column`` locate the problem when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


class EmptyConditionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResponseRecord:
    subject_id: str
    uncertainty: str
    option_space: str
    response: str
    item: str
    row: int = field(default=None, compare=False)

    @property
    def condition(self) -> Condition:
        return Condition(self.uncertainty, self.option_space)

    @property
    def category(self) -> str:
        return RESPONSES[self.response]


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8-sig")
    return data


def parse_responses_csv(data) -> list:
    """Parse UTF-8 response CSV bytes (or text) into records.

    Row numbers count the header as row 1.
    """
    reader = csv.reader(io.StringIO(_text(data), newline=""))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataFormatError("empty file, expected a header row", row=1) from None
    for col in CSV_COLUMNS:
        if col not in header:
            raise DataFormatError("missing column", row=1, column=col)
    pos = {col: header.index(col) for col in CSV_COLUMNS}

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            missing = header[len(row)] if len(row) < len(header) else None
            raise DataFormatError(
                f"expected {len(header)} fields, found {len(row)}",
                row=line_no, column=missing,
            )
        values = {}
        for col in CSV_COLUMNS:
            value = row[pos[col]]
            if col in _ENUMS:
                value = value.strip().lower()
                if value not in _ENUMS[col]:
                    raise DataFormatError(
                        f"invalid value {row[pos[col]]!r}; expected one of "
                        f"{', '.join(_ENUMS[col])}",
                        row=line_no, column=col,
                    )
            values[col] = value
        records.append(ResponseRecord(**values, row=line_no))
    return records


def write_responses_csv(records) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([r.subject_id, r.uncertainty.lower(), r.option_space.lower(),
                         r.response.lower(), r.item])
    return buf.getvalue().encode("utf-8")


def aggregate_counts(records) -> ObservedCounts:
    """Pool records over subjects and items into per-condition counts.

    Conditions without any record stay at zero and trigger an
    :class:`EmptyConditionWarning`.
    """
    counts = np.zeros((len(CONDITIONS), len(CATEGORIES)), dtype=np.int64)
    row_of = {c: i for i, c in enumerate(CONDITIONS)}
    col_of = {c: j for j, c in enumerate(CATEGORIES)}
    for r in records:
        counts[row_of[r.condition], col_of[r.category]] += 1
    out = ObservedCounts(counts)
    if out.empty_conditions:
        warnings.warn(
            "no responses for condition(s) "
            + ", ".join(c.label for c in out.empty_conditions),
            EmptyConditionWarning,
            stacklevel=2,
        )
    return out


def records_from_counts(counts: ObservedCounts, item="pooled") -> list:
    """One record per counted response; subject ids are synthetic."""
    records = []
    for cond, row in zip(counts.conditions, counts.counts):
        for cat, k in zip(CATEGORIES, row):
            for _ in range(int(k)):
                records.append(ResponseRecord(
                    f"s{len(records) + 1}", cond.uncertainty.value,
                    cond.option_space.value, _CATEGORY_TO_RESPONSE[cat], item,
                ))
    return records


def write_samples_csv(samples: PosteriorSamples) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["chain", "iteration", *samples.param_names, "log_density"])
    for c in range(samples.n_chains):
        for i in range(samples.n_draws):
            writer.writerow([c, i, *map(repr, samples.draws[c, i].tolist()),
                             repr(float(samples.log_density[c, i]))])
    return buf.getvalue().encode("utf-8")


def read_samples_csv(data, variant) -> PosteriorSamples:
    """Inverse of :func:`write_samples_csv`; header must match the variant."""
    variant = parse_variant(variant)
    reader = csv.reader(io.StringIO(_text(data), newline=""))
    header = next(reader, None)
    expected = ["chain", "iteration", *variant_spec(variant).free_parameters, "log_density"]
    if header != expected:
        raise DataFormatError(
            f"samples header {header} does not match model {variant.value} "
            f"(expected {expected})",
            row=1,
        )
    rows = [r for r in reader if r]
    if not rows:
        raise DataFormatError("samples file has no draws", row=2)
    arr = np.array(rows, dtype=float)
    chains = arr[:, 0].astype(int)
    iters = arr[:, 1].astype(int)
    m, n = chains.max() + 1, iters.max() + 1
    if len(arr) != m * n:
        raise DataFormatError("samples file is not a complete chain x iteration grid")
    d = len(header) - 3
    draws = np.empty((m, n, d))
    log_density = np.empty((m, n))
    draws[chains, iters] = arr[:, 2:2 + d]
    log_density[chains, iters] = arr[:, -1]
    return PosteriorSamples(draws, tuple(header[2:-1]), log_density, variant)


def _encode(obj):
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            enc, flags = _encode_value(v)
            out[k] = enc
            if flags is not None:
                out[f"{k}_nonfinite"] = flags
        return out
    return _encode_value(obj)[0]


def _nonfinite_tag(x: float) -> str:
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _encode_value(v):
    """Returns (json value, companion flags or None)."""
    if isinstance(v, dict):
        return _encode(v), None
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        flags = {}
        out = []
        for i, item in enumerate(v):
            enc, sub = _encode_value(item)
            out.append(enc)
            if sub is not None:
                if isinstance(sub, dict):
                    flags.update({f"{i}.{k}": t for k, t in sub.items()})
                else:
                    flags[str(i)] = sub
        return out, (flags or None)
    if isinstance(v, (bool, np.bool_)):
        return bool(v), None
    if isinstance(v, (int, np.integer)):
        return int(v), None
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isfinite(x):
            return x, None
        return None, _nonfinite_tag(x)
    return v, None


_TAG_VALUE = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}


def _decode(obj):
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    if not isinstance(obj, dict):
        return obj
    out = {}
    for k, v in obj.items():
        if k.endswith("_nonfinite") and k[: -len("_nonfinite")] in obj:
            continue
        out[k] = _decode(v)
        flags = obj.get(f"{k}_nonfinite")
        if flags is None:
            continue
        if isinstance(flags, str):
            out[k] = _TAG_VALUE[flags]
        else:
            for path, tag in flags.items():
                target = out[k]
                idx = [int(p) for p in path.split(".")]
                for p in idx[:-1]:
                    target = target[p]
                target[idx[-1]] = _TAG_VALUE[tag]
    return out


def write_report_json(report) -> bytes:
    """Serialize a report (anything with ``to_dict`` or a plain mapping)."""
    doc = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    doc = {"schema_version": SCHEMA_VERSION, **_encode(doc)}
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def read_report_json(data) -> dict:
    doc = json.loads(_text(data))
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema_version {version!r}")
    return _decode(doc)


def load_mapping(path) -> dict:
    """Read a YAML or JSON key-value document."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DataFormatError(f"{path}: not a valid YAML/JSON document ({exc})") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: expected a key-value document")
    return doc


def load_params(source) -> ModelParams:
    """Parameters from a file path or mapping; a top-level ``params`` key is allowed."""
    doc = source if isinstance(source, dict) else load_mapping(source)
    if "params" in doc and isinstance(doc["params"], dict):
        doc = doc["params"]
    try:
        return ModelParams.from_mapping(doc)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid parameters: {exc}") from exc


def load_scenario(source):
    """Scenario document: ``variant``, optional ``conditions`` and ``params``.

    Example::

        variant: main
        conditions:
          - {uncertainty: high, option_space: large}
          - low-small
        params: {epsilon_low: 0.17, epsilon_high: 0.49, ...}

    Returns ``(variant, conditions, params or None)``; conditions default to
    all four.
    """
    doc = source if isinstance(source, dict) else load_mapping(source)
    variant = parse_variant(doc.get("variant", doc.get("model", "main")))
    conds = []
    for entry in doc.get("conditions") or []:
        try:
            if isinstance(entry, str):
                conds.append(Condition.from_label(entry))
            else:
                conds.append(Condition(entry["uncertainty"], entry["option_space"]))
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"invalid condition {entry!r}") from exc
    params = load_params(doc["params"]) if "params" in doc else None
    return variant, tuple(conds) or CONDITIONS, params
