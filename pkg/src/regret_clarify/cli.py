"""Command-line interface: simulate, fit, ppc, loo, compare, predict.

Any long option may also come from a YAML/JSON file given with ``--config``
(keys use underscores, e.g. ``no_strict: true``); explicit flags win. The
seed falls back to ``REGRET_CLARIFY_SEED`` and then to 0.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    DataFormatError,
    ResponseRecord,
    aggregate_counts,
    load_mapping,
    load_params,
    load_scenario,
    parse_responses_csv,
    read_report_json,
    read_samples_csv,
    write_report_json,
    write_responses_csv,
    write_samples_csv,
)
from .evaluation import (
    LooReport,
    Statistic,
    bpppv,
    compare_models,
    pointwise_log_likelihood,
    posterior_predictive,
    psis_loo,
)
from .inference import McmcConfig, SamplerError, sample_posterior, summarize
from .models import parse_variant
from .scenario import CATEGORIES, CONDITIONS, predict_table

__all__ = ["main", "build_parser"]

SEED_ENV = "REGRET_CLARIFY_SEED"
EXIT_ERROR = 1
EXIT_DIAGNOSTICS = 3

_DEFAULTS = {
    "model": "main",
    "chains": 4,
    "warmup": 3000,
    "draws": 4000,
    "n_per_condition": 125,
    "no_strict": False,
    "statistic": None,
    "target_accept": 0.3,
    "substeps": None,
}

_RESPONSE_LABEL = {"cq": "cq", "exh": "exhaustive", "ms1": "ms_preferred",
                   "ms2": "ms_dispreferred"}


class CliError(Exception):
    pass


def _common(p, *names):
    adders = {
        "config": lambda: p.add_argument("--config", help="YAML/JSON file supplying option defaults"),
        "seed": lambda: p.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or 0)"),
        "model": lambda: p.add_argument("--model", help="main | no-cost | no-uncertainty | eer"),
        "out": lambda: p.add_argument("--out", help="output path"),
        "data": lambda: p.add_argument("--data", help="responses CSV"),
        "params": lambda: p.add_argument("--params", help="parameter file (YAML/JSON)"),
        "samples": lambda: p.add_argument("--samples", help="samples CSV written by fit"),
    }
    for name in ("config", "seed") + names:
        adders[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regret-clarify",
        description="Expected-regret model of clarification questions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw synthetic responses from the model")
    _common(p, "model", "params", "out")
    p.add_argument("--n-per-condition", type=int, dest="n_per_condition")

    p = sub.add_parser("fit", help="sample the posterior for a dataset")
    _common(p, "model", "data", "out")
    p.add_argument("--chains", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--target-accept", type=float, dest="target_accept")
    p.add_argument("--substeps", type=int)
    p.add_argument("--no-strict", action="store_true", default=None, dest="no_strict",
                   help="do not fail on R-hat >= 1.01 or ESS < 2000")

    p = sub.add_parser("ppc", help="posterior predictive check")
    _common(p, "model", "samples", "data", "out")
    p.add_argument("--statistic", help="binomial-cq | multinomial (default: both)")

    p = sub.add_parser("loo", help="PSIS leave-one-out cross-validation")
    _common(p, "model", "samples", "data", "out")

    p = sub.add_parser("compare", help="z-test between two LOO reports")
    _common(p, "out")
    p.add_argument("reports", nargs=2, metavar="LOO_JSON")

    p = sub.add_parser("predict", help="response distribution per condition")
    _common(p, "model", "params", "out")
    return parser


def _resolve(args) -> dict:
    """Merge flags over config file over built-in defaults."""
    opts = dict(_DEFAULTS)
    if args.config:
        try:
            doc = load_mapping(args.config)
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc.strerror}") from exc
        opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if opts.get("seed") is None:
        env = os.environ.get(SEED_ENV)
        try:
            opts["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise CliError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if opts["seed"] < 0:
        raise CliError("seed must be nonnegative")
    return opts


def _require(opts, key):
    if opts.get(key) in (None, ""):
        raise CliError(f"--{key.replace('_', '-')} is required")
    return opts[key]


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc


def _emit(opts, payload: bytes, default_name=None):
    out = opts.get("out")
    if out is None:
        if default_name is None:
            sys.stdout.write(payload.decode("utf-8"))
        return
    path = Path(out)
    if path.is_dir() and default_name:
        path = path / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def _load_data(opts):
    path = _require(opts, "data")
    try:
        return aggregate_counts(parse_responses_csv(_read_bytes(path)))
    except DataFormatError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_samples(opts, variant):
    path = _require(opts, "samples")
    try:
        return read_samples_csv(_read_bytes(path), variant)
    except (DataFormatError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_model_params(opts, variant):
    path = _require(opts, "params")
    try:
        params = load_params(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except DataFormatError as exc:
        raise CliError(f"{path}: {exc}") from exc
    try:
        params.check_variant(variant)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return params


def _fmt(x) -> str:
    return f"{x:.4f}" if np.isfinite(x) else str(x)


def cmd_simulate(opts) -> int:
    variant = parse_variant(opts["model"])
    params = _load_model_params(opts, variant)
    n = int(opts["n_per_condition"])
    if n < 0:
        raise CliError("--n-per-condition must be nonnegative")
    table = predict_table(variant, params, CONDITIONS)
    rng = np.random.default_rng(opts["seed"])
    draws = np.stack([rng.choice(len(CATEGORIES), size=n, p=p / p.sum()) for p in table])
    records = []
    # each simulated subject contributes one trial per condition
    for s in range(n):
        for k, cond in enumerate(CONDITIONS):
            records.append(ResponseRecord(
                f"s{s + 1}", cond.uncertainty.value, cond.option_space.value,
                _RESPONSE_LABEL[CATEGORIES[draws[k, s]]], "synthetic",
            ))
    _emit(opts, write_responses_csv(records), default_name=None)
    return 0


def cmd_fit(opts) -> int:
    variant = parse_variant(opts["model"])
    data = _load_data(opts)
    try:
        config = McmcConfig(
            chains=int(opts["chains"]), warmup=int(opts["warmup"]),
            draws=int(opts["draws"]), seed=int(opts["seed"]),
            target_accept=float(opts["target_accept"]),
            substeps=None if opts["substeps"] is None else int(opts["substeps"]),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    try:
        samples = sample_posterior(data, variant, config)
    except SamplerError as exc:
        raise CliError(f"sampler failed: {exc}") from exc
    report = summarize(samples, config)

    print(f"model: {variant.value}  chains={config.chains} warmup={config.warmup} "
          f"draws={config.draws} seed={config.seed}")
    print(f"{'parameter':<14}{'mean':>9}{'2.5%':>9}{'97.5%':>9}{'R-hat':>9}{'ESS':>9}")
    for name, s in report.params.items():
        print(f"{name:<14}{_fmt(s.mean):>9}{_fmt(s.lower):>9}{_fmt(s.upper):>9}"
              f"{_fmt(s.r_hat):>9}{s.ess:>9.0f}")

    if opts.get("out"):
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "samples.csv").write_bytes(write_samples_csv(samples))
        (out / "fit_report.json").write_bytes(write_report_json(report))

    if not report.converged():
        msg = "diagnostics: R-hat >= 1.01 or ESS <= 2000 for at least one parameter"
        if opts["no_strict"]:
            print(f"warning: {msg} (ignored, --no-strict)", file=sys.stderr)
        else:
            print(f"error: {msg}", file=sys.stderr)
            return EXIT_DIAGNOSTICS
    return 0


def cmd_ppc(opts) -> int:
    variant = parse_variant(opts["model"])
    samples = _load_samples(opts, variant)
    data = _load_data(opts)
    report = posterior_predictive(samples, data.conditions)
    stats = ([Statistic.parse(opts["statistic"])] if opts.get("statistic")
             else list(Statistic))
    report.bpppv = {s.value: bpppv(samples, data, s, seed=opts["seed"]) for s in stats}

    print(f"{'condition':<13}{'category':<9}{'observed':>9}{'mean':>9}{'2.5%':>9}{'97.5%':>9}")
    observed = data.counts / np.maximum(data.per_condition_n, 1)[:, None]
    for i, (cond, cat, m, lo, hi) in enumerate(report.rows()):
        obs = observed[i // len(CATEGORIES), i % len(CATEGORIES)]
        print(f"{cond:<13}{cat:<9}{obs:>9.4f}{m:>9.4f}{lo:>9.4f}{hi:>9.4f}")
    for name, value in report.bpppv.items():
        print(f"Bpppv ({name}): {value:.4f}")
    _emit(opts, write_report_json(report), default_name="ppc.json")
    return 0


def cmd_loo(opts) -> int:
    variant = parse_variant(opts["model"])
    samples = _load_samples(opts, variant)
    data = _load_data(opts)
    try:
        report = psis_loo(pointwise_log_likelihood(samples, data))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    print(f"elpd_loo: {report.elpd:.3f}  SE: {report.elpd_se:.3f}  "
          f"observations: {report.n_obs}  pareto k > 0.7: {report.n_flagged}")
    _emit(opts, write_report_json(report), default_name="loo.json")
    return 0


def cmd_compare(opts) -> int:
    paths = opts["reports"]
    reports = []
    for path in paths:
        try:
            reports.append(LooReport.from_dict(read_report_json(_read_bytes(path))))
        except (DataFormatError, KeyError, ValueError) as exc:
            raise CliError(f"{path}: not a LOO report ({exc})") from exc
    try:
        result = compare_models(*reports)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if result.delta_elpd > 0:
        winner = paths[0]
    elif result.delta_elpd < 0:
        winner = paths[1]
    else:
        winner = "tie"
    print(f"delta_elpd: {result.delta_elpd:.3f}  SE: {result.se_delta:.3f}  "
          f"z: {result.z:.3f}  p: {result.p:.3g}")
    print(f"winner: {winner}")
    doc = {**result.to_dict(), "a": paths[0], "b": paths[1], "winner": winner}
    if opts.get("out"):
        _emit(opts, write_report_json(doc), default_name="compare.json")
    return 0


def cmd_predict(opts) -> int:
    conditions = CONDITIONS
    if opts.get("config"):
        doc = load_mapping(opts["config"])
        if "conditions" in doc:
            _, conditions, _ = load_scenario(doc)
    variant = parse_variant(opts["model"])
    params = _load_model_params(opts, variant)
    table = predict_table(variant, params, conditions)
    print(f"{'condition':<13}" + "".join(f"{c:>9}" for c in CATEGORIES))
    for cond, row in zip(conditions, table):
        print(f"{cond.label:<13}" + "".join(f"{p:>9.4f}" for p in row))
    doc = {
        "kind": "prediction",
        "variant": variant.value,
        "params": params.to_dict(),
        "categories": list(CATEGORIES),
        "conditions": [c.label for c in conditions],
        "probabilities": table,
    }
    if opts.get("out"):
        _emit(opts, write_report_json(doc), default_name="predict.json")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "ppc": cmd_ppc,
    "loo": cmd_loo,
    "compare": cmd_compare,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = _resolve(args)
        return _COMMANDS[args.command](opts)
    except (CliError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
