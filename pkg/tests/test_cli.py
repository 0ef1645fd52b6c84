import json
import math

import numpy as np
import pytest

from regret_clarify.cli import EXIT_DIAGNOSTICS, main
from regret_clarify.data_io import aggregate_counts, parse_responses_csv

PARAMS_YAML = """\
epsilon_low: 0.17
epsilon_high: 0.49
delta_large: 0.32
delta_small: 0.11
alpha: 5
tau: 3.6
c: 0.18
"""
QUICK = ["--chains", "2", "--warmup", "200", "--draws", "200"]


@pytest.fixture
def params_file(tmp_path):
    p = tmp_path / "params.yaml"
    p.write_text(PARAMS_YAML)
    return p


@pytest.fixture
def data_file(tmp_path, params_file):
    out = tmp_path / "data.csv"
    assert main(["simulate", "--params", str(params_file), "--seed", "1", "--out", str(out)]) == 0
    return out


def test_simulate_zero_gives_header_only(tmp_path, params_file):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--params", str(params_file), "--n-per-condition", "0",
                 "--out", str(out)]) == 0
    assert out.read_bytes() == b"subject_id,uncertainty,option_space,response,item\n"


def test_simulate_is_deterministic(tmp_path, params_file, data_file):
    again = tmp_path / "again.csv"
    main(["simulate", "--params", str(params_file), "--seed", "1", "--out", str(again)])
    assert again.read_bytes() == data_file.read_bytes()
    other = tmp_path / "other.csv"
    main(["simulate", "--params", str(params_file), "--seed", "2", "--out", str(other)])
    assert other.read_bytes() != data_file.read_bytes()


def test_simulated_cq_count_high_large(data_file):
    counts = aggregate_counts(parse_responses_csv(data_file.read_bytes()))
    assert counts.per_condition_n.tolist() == [125] * 4
    sigma = math.sqrt(125 * 0.6234 * (1 - 0.6234))
    assert abs(counts.counts[0, 0] - 125 * 0.6234) < 3 * sigma


def test_simulate_invalid_params(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("alpha: -2\n")
    assert main(["simulate", "--params", str(bad)]) != 0
    assert "alpha" in capsys.readouterr().err
    assert main(["simulate", "--params", str(tmp_path / "missing.yaml")]) != 0
    assert main(["simulate"]) != 0


def test_simulate_rejects_params_outside_variant(params_file, capsys):
    assert main(["simulate", "--params", str(params_file), "--model", "no-cost"]) != 0
    assert "delta" in capsys.readouterr().err


def test_fit_no_cost_has_no_delta_rows(tmp_path, data_file, capsys):
    out = tmp_path / "fit"
    code = main(["fit", "--data", str(data_file), "--model", "no-cost", "--out", str(out),
                 "--no-strict", *QUICK])
    assert code == 0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["schema_version"] == "1"
    assert not any(k.startswith("delta") for k in report["params"])
    assert "delta" not in capsys.readouterr().out
    header = (out / "samples.csv").read_text().splitlines()[0]
    assert "delta" not in header


def test_fit_strict_gate_fails_short_run(tmp_path, data_file, capsys):
    code = main(["fit", "--data", str(data_file), "--out", str(tmp_path / "f"), *QUICK])
    assert code == EXIT_DIAGNOSTICS
    assert "ESS" in capsys.readouterr().err
    # outputs are still written for inspection
    assert (tmp_path / "f" / "samples.csv").exists()


def test_fit_default_config_echo(tmp_path, data_file):
    """Defaults are the reported 3000 warm-up and 4000 main samples on 4 chains."""
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(data_file), "--out", str(out), "--seed", "3"]) == 0
    report = json.loads((out / "fit_report.json").read_text())
    cfg = report["config"]
    assert (cfg["chains"], cfg["warmup"], cfg["draws"]) == (4, 3000, 4000)
    assert report["seed"] == 3


def test_fit_bad_data_reports_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("subject_id,uncertainty,option_space,response,item\ns1,high,large,cq,x\n"
                   "s2,high,medium,cq,x\n")
    assert main(["fit", "--data", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "bad.csv" in err and "row 3" in err and "option_space" in err


def test_config_file_and_flag_override(tmp_path, data_file):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("chains: 2\nwarmup: 200\ndraws: 150\nno_strict: true\nseed: 9\n")
    out = tmp_path / "a"
    assert main(["fit", "--config", str(cfg), "--data", str(data_file), "--out", str(out),
                 "--draws", "120"]) == 0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["config"]["draws"] == 120
    assert report["config"]["chains"] == 2
    assert report["seed"] == 9


def test_env_seed(tmp_path, data_file, monkeypatch):
    monkeypatch.setenv("REGRET_CLARIFY_SEED", "17")
    out = tmp_path / "e"
    assert main(["fit", "--data", str(data_file), "--out", str(out), "--no-strict", *QUICK]) == 0
    assert json.loads((out / "fit_report.json").read_text())["seed"] == 17
    monkeypatch.setenv("REGRET_CLARIFY_SEED", "abc")
    assert main(["fit", "--data", str(data_file), "--no-strict", *QUICK]) == 1


def test_fit_byte_identical(tmp_path, data_file):
    for name in ("x", "y"):
        main(["fit", "--data", str(data_file), "--out", str(tmp_path / name), "--seed", "4",
              "--no-strict", *QUICK])
    assert (tmp_path / "x" / "samples.csv").read_bytes() == (tmp_path / "y" / "samples.csv").read_bytes()
    assert (tmp_path / "x" / "fit_report.json").read_bytes() == \
        (tmp_path / "y" / "fit_report.json").read_bytes()


@pytest.fixture
def fitted(tmp_path, data_file):
    out = tmp_path / "fit"
    main(["fit", "--data", str(data_file), "--out", str(out), "--no-strict", *QUICK])
    return out / "samples.csv"


def test_ppc_and_loo_and_compare(tmp_path, data_file, fitted, capsys):
    ppc = tmp_path / "ppc.json"
    assert main(["ppc", "--samples", str(fitted), "--data", str(data_file),
                 "--statistic", "multinomial", "--out", str(ppc)]) == 0
    doc = json.loads(ppc.read_text())
    assert list(doc["bpppv"]) == ["multinomial"]
    assert np.array(doc["mean"]).shape == (4, 4)

    loo = tmp_path / "loo.json"
    assert main(["loo", "--samples", str(fitted), "--data", str(data_file), "--out", str(loo)]) == 0
    assert json.loads(loo.read_text())["kind"] == "loo_report"

    capsys.readouterr()
    assert main(["compare", str(loo), str(loo)]) == 0
    out = capsys.readouterr().out
    assert "delta_elpd: 0.000" in out and "p: 1" in out and "winner: tie" in out


def test_compare_mismatch_errors(tmp_path, capsys):
    from regret_clarify.data_io import write_report_json
    from regret_clarify.evaluation import LooReport
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_bytes(write_report_json(LooReport(0.0, 0.0, np.zeros(3), np.zeros(3), 0)))
    b.write_bytes(write_report_json(LooReport(0.0, 0.0, np.zeros(4), np.zeros(4), 0)))
    assert main(["compare", str(a), str(b)]) == 1
    assert "different" in capsys.readouterr().err


def test_ppc_single_draw_samples(tmp_path, data_file):
    samples = tmp_path / "one.csv"
    samples.write_text("chain,iteration,epsilon_low,epsilon_high,delta_large,delta_small,"
                       "alpha,tau,c,log_density\n0,0,0.17,0.49,0.32,0.11,5.0,3.6,0.18,0.0\n")
    out = tmp_path / "ppc.json"
    assert main(["ppc", "--samples", str(samples), "--data", str(data_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["lower"] == doc["mean"] == doc["upper"]
    assert doc["mean"][0][0] == pytest.approx(0.6234, abs=1e-4)


def test_predict(tmp_path, params_file, capsys):
    out = tmp_path / "pred.json"
    assert main(["predict", "--params", str(params_file), "--out", str(out)]) == 0
    assert "0.6234" in capsys.readouterr().out
    doc = json.loads(out.read_text())
    assert doc["conditions"][0] == "high-large"
    assert doc["probabilities"][0][0] == pytest.approx(0.6234, abs=1e-4)


def test_predict_config_conditions(tmp_path, params_file, capsys):
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text(f"model: main\nparams: {params_file}\nconditions: [low-small]\n")
    assert main(["predict", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "low-small" in out and "high-large" not in out
