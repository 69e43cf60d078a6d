import json

import pytest

from qgaids.cli import RunConfig, main, parse_config_text
from qgaids.errors import ConfigError

FAST = ["--embed-dim", "4", "--hidden-dim", "12", "--epochs", "3"]
SEARCH = ["--population", "6", "--generations", "5"]


def run_pipeline(root, seed=3):
    assert main(["synth", "--n", "300", "--informative", "3", "--noise", "5", "--seed", str(seed),
                 "--out", str(root / "s")]) == 0
    assert main(["pretrain", "--data", str(root / "s/data.qgz"), "--seed", str(seed),
                 "--out", str(root / "p"), *FAST]) == 0
    assert main(["optimize", "--data", str(root / "s/data.qgz"), "--checkpoint",
                 str(root / "p/checkpoint.qgz"), "--seed", str(seed), "--out", str(root / "o"),
                 *SEARCH]) == 0
    assert main(["evaluate", "--bundle", str(root / "o/bundle.qgz"), "--data",
                 str(root / "o/test.qgz"), "--timing", str(root / "o/timing.json"),
                 "--out", str(root / "e")]) == 0


def test_end_to_end_deterministic(tmp_path, capsys):
    run_pipeline(tmp_path / "a")
    run_pipeline(tmp_path / "b")
    a, b = tmp_path / "a", tmp_path / "b"
    ra = json.loads((a / "o/run_report.json").read_text())
    rb = json.loads((b / "o/run_report.json").read_text())
    assert ra["bundle_digest"] == rb["bundle_digest"]
    assert (a / "o/bundle.qgz").read_bytes() == (b / "o/bundle.qgz").read_bytes()
    assert (a / "e/metrics.json").read_text() == (b / "e/metrics.json").read_text()
    assert main(["report", str(a / "e/evaluation.json"), "--published", "--out",
                 str(tmp_path / "r")]) == 0
    text = (tmp_path / "r/report.txt").read_text()
    assert "96.7" in text and "Accuracy (%)" in text


def test_preprocess_and_csv_evaluate(tmp_path, nsl_fixture):
    out = tmp_path / "pre"
    assert main(["preprocess", "--csv", str(nsl_fixture), "--schema", "nsl_kdd",
                 "--out", str(out)]) == 0
    assert (out / "schema.json").exists() and (out / "normalization.json").exists()
    assert main(["pretrain", "--data", str(out / "data.qgz"), "--out", str(tmp_path / "p"),
                 "--batch-size", "4", "--lambda-t", "0", *FAST]) == 0
    assert main(["optimize", "--data", str(out / "data.qgz"), "--checkpoint",
                 str(tmp_path / "p/checkpoint.qgz"), "--out", str(tmp_path / "o"),
                 *SEARCH]) == 0
    assert main(["evaluate", "--bundle", str(tmp_path / "o/bundle.qgz"), "--csv",
                 str(nsl_fixture), "--json"]) == 0


def test_exit_codes(tmp_path, capsys):
    assert main(["pretrain", "--data", str(tmp_path / "missing.qgz")]) == 3
    assert main(["synth", "--n", "2", "--out", str(tmp_path / "x")]) == 2
    main(["synth", "--n", "200", "--out", str(tmp_path / "s")])
    assert main(["pretrain", "--data", str(tmp_path / "s/data.qgz"), "--lambda-t", "0.5",
                 "--out", str(tmp_path / "p"), *FAST]) == 2
    cfg = tmp_path / "bad.conf"
    cfg.write_text("qga.nonsense = 3\n")
    assert main(["pretrain", "--data", str(tmp_path / "s/data.qgz"), "--config", str(cfg)]) == 2
    main(["pretrain", "--data", str(tmp_path / "s/data.qgz"), "--out", str(tmp_path / "p"),
          *FAST])
    main(["synth", "--n", "200", "--noise", "2", "--out", str(tmp_path / "s2")])
    assert main(["optimize", "--data", str(tmp_path / "s2/data.qgz"), "--checkpoint",
                 str(tmp_path / "p/checkpoint.qgz"), "--out", str(tmp_path / "o")]) == 4
    assert main(["optimize", "--data", str(tmp_path / "s/data.qgz"), "--checkpoint",
                 str(tmp_path / "s/data.qgz"), "--out", str(tmp_path / "o")]) == 4


def test_config_file_and_overrides(tmp_path):
    pairs = parse_config_text("# comment\nseed = 4\nqga.population = 7\nssl.lambda_t = auto\n"
                              "fitness.w_cost = 0.2\nsplit.fractions = 0.5,0.25,0.25\n")
    cfg = RunConfig.from_pairs(pairs)
    assert cfg.qga.population == 7 and cfg.ssl.lambda_t is None
    assert cfg.weights.w_cost == 0.2 and cfg.split.fractions == (0.5, 0.25, 0.25)
    assert len({cfg.ssl.seed, cfg.qga.seed, cfg.split.seed}) == 3
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")
    with pytest.raises(ConfigError):
        RunConfig.from_pairs({"qga.population": "many"})
