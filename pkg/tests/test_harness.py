import csv
import json
import logging
import math

import numpy as np
import pytest

from pazo.cli import main
from pazo.config import ConfigError, parse_config, parse_text, serialize
from pazo.privacy import accountant_epsilon
from pazo.records import OpCount, RunRecord
from pazo.sampling import DEFAULT_LAMBDA
from pazo.sweep import run_sweep, timing_report

SMALL = """
problem.kind = logistic
problem.dim = 6
split.n_private = 200
split.n_public = 20
split.n_test = 100
privacy.batch_b = 16
privacy.delta = 1e-3
run.T = 25
run.eval_every = 5
"""


def cfg_text(algo="pazo-m", extra=""):
    return SMALL + f"algorithm.name = {algo}\n" + extra


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "problem.kind = logistic\nalgorithm.name = dpzero\n"))
    assert cfg.delta == 1.0 / cfg.split.n_private
    assert cfg.algorithm_config().q == 1
    assert cfg.algorithm_config().lam == DEFAULT_LAMBDA
    assert cfg.run.eval_every == 10
    assert cfg.privacy.batch_b == 64
    assert cfg.privacy.epsilons == (0.1, 0.5, 1.0, 2.0, 3.0)


@pytest.mark.parametrize("line,match", [
    ("privacy.epsilons = -1", "epsilons"),
    ("run.seeds = ", "seeds"),
    ("algorithm.alpha = 2", "alpha"),
    ("privacy.delta = 1.5", "delta"),
    ("run.T = 0", "run.T"),
    ("split.shift_kind = rotate", "shift_kind"),
    ("privacy.batch_b = 5000", "batch_b"),
])
def test_range_errors(line, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(cfg_text() + line + "\n")


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError, match="problem.colour, run.speed"):
        parse_text(cfg_text() + "run.speed = 3\nproblem.colour = red\n")


def test_other_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="algorithm.name"):
        parse_text(SMALL)
    with pytest.raises(ConfigError, match="must be one of"):
        parse_text(cfg_text("adam"))
    with pytest.raises(ConfigError, match="expected"):
        parse_text(cfg_text() + "garbage line\n")
    with pytest.raises(ConfigError, match="run.T"):
        parse_text(cfg_text() + "run.T = many\n")
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.cfg")


def test_serialize_round_trip():
    cfg = parse_text(cfg_text("pazo-p", "algorithm.k = 3\nalgorithm.lambda = 0.001\nrun.seeds = 4, 5\n"
                                        "split.shift_kind = class_imbalance\nsplit.ratio = 1:0.5\n"))
    again = parse_text(serialize(cfg))
    assert again == cfg
    assert parse_text(serialize(again)) == cfg


def test_one_cell_gives_one_row(tmp_path):
    cfg = parse_text(cfg_text(extra="privacy.epsilons = 1\n"))
    res = run_sweep(cfg, tmp_path / "out")
    rows = read_csv(tmp_path / "out" / "summary.csv")
    assert len(rows) == 1
    lines = (tmp_path / "out" / "runs" / "pazo-m_eps1_seed0.jsonl").read_text().splitlines()
    assert len(lines) >= 1 and json.loads(lines[-1])["iteration"] == 25
    assert len(json.loads(lines[0])["x"]) == 6
    assert res.records[0].config["seed"] == 0


def test_two_seeds_same_sigma(tmp_path):
    cfg = parse_text(cfg_text(extra="privacy.epsilons = 1\nrun.seeds = 0, 1\n"))
    rows = run_sweep(cfg, tmp_path / "out").rows
    assert rows[0]["sigma"] == rows[1]["sigma"]
    assert rows[0]["final_accuracy"] != rows[1]["final_accuracy"]


def test_csv_epsilon_sigma_pairs_are_sound(tmp_path):
    cfg = parse_text(cfg_text("dpsgd", "privacy.epsilons = 0.5, 2\n"))
    for row in run_sweep(cfg, tmp_path / "out").rows:
        eps = accountant_epsilon(float(row["sigma"]), 16, 200, 25, 1e-3)
        assert eps <= float(row["epsilon"])


def test_calibration_failure_marks_cell(tmp_path):
    cfg = parse_text(cfg_text(extra="privacy.epsilons = 1e-5, 1\nprivacy.delta = 1e-9\n"))
    rows = run_sweep(cfg, tmp_path / "out").rows
    assert [r["status"] for r in rows] == ["fail", "ok"]
    assert rows[0]["sigma"] == "" and rows[0]["final_accuracy"] == ""


def test_non_private_reference_runs_once_per_seed(tmp_path):
    rows = run_sweep(parse_text(cfg_text("mezo")), tmp_path / "out").rows
    assert len(rows) == 1 and rows[0]["epsilon"] == "inf" and rows[0]["sigma"] == "0.0"


def test_quadratic_and_csv_problems(tmp_path):
    quad = parse_text(cfg_text("sgd", "problem.kind = quadratic\nproblem.mu = 0.5\nsplit.shift_kind = mean_shift\n"
                                      "split.shift = 1.0\n"))
    rows = run_sweep(quad, tmp_path / "q").rows
    assert rows[0]["final_accuracy"] == "" and float(rows[0]["gamma"]) > 0
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 3))
    data = "\n".join(",".join(map(str, r)) + f",{int(r[0] > 0)}" for r in X)
    path = write(tmp_path, data, "data.csv")
    csv_cfg = parse_text(cfg_text("dpsgd", f"problem.kind = csv\nproblem.path = {path}\nprivacy.epsilons = 2\n"))
    rows = run_sweep(csv_cfg, tmp_path / "c").rows
    assert float(rows[0]["final_accuracy"]) > 0.7


def test_timing_report_average_and_order(caplog):
    recs = [RunRecord("pazo-s", 1.0, 1.0, 0, step_seconds=[0.5] * 20, ops=[OpCount(4, 3)] * 20),
            RunRecord("dpsgd", 1.0, 1.0, 0, step_seconds=[0.1] * 5, ops=[OpCount(64, 0, 64)] * 5)]
    with caplog.at_level(logging.WARNING):
        rows = timing_report(recs)
    assert [r["algorithm"] for r in rows] == ["dpsgd", "pazo-s"]
    assert rows[1]["mean_s_per_iter"] == 0.5
    assert "dpsgd" in caplog.text and "pazo-s" not in caplog.text
    assert rows[1]["private_forward"] + rows[1]["private_backward"] < rows[0]["private_forward"] + rows[0]["private_backward"]


def test_zo_uses_fewer_gradient_evaluations_than_dpsgd(tmp_path):
    out = {}
    for algo in ("dpzero", "dpsgd"):
        res = run_sweep(parse_text(cfg_text(algo, "privacy.epsilons = 1\n")), tmp_path / algo)
        out[algo] = res.timing[0]
    assert out["dpzero"]["private_backward"] == 0 < out["dpsgd"]["private_backward"]
    assert out["dpzero"]["private_forward"] < out["dpsgd"]["private_forward"]


# CLI


def test_cli_accountant(capsys):
    assert main(["accountant", "--sigma", "1.1", "--delta", "1e-5", "--b", "256", "--n", "60000", "--T", "100"]) == 0
    line = capsys.readouterr().out.strip()
    fields = dict(kv.split("=") for kv in line.split())
    assert set(fields) == {"epsilon", "delta", "clip_C", "sigma", "batch_b", "dataset_n", "rounds_T", "queries_q"}
    assert float(fields["sigma"]) == 1.1
    assert main(["accountant", "--epsilon", "1", "--delta", "1e-5", "--b", "64", "--n", "2000", "--T", "100"]) == 0
    assert main(["accountant", "--epsilon", "1e-6", "--delta", "1e-9", "--b", "64", "--n", "64", "--T", "1000"]) == 3
    assert main(["accountant", "--delta", "1e-5", "--b", "64", "--n", "2000", "--T", "100"]) == 2


def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path, cfg_text(extra=f"privacy.epsilons = 1\nrun.output_dir = {tmp_path / 'o'}\n"))
    assert main(["run", str(good)]) == 0
    assert (tmp_path / "o" / "summary.csv").exists()
    assert main(["sweep", str(write(tmp_path, cfg_text() + "bogus.key = 1\n", "bad.cfg"))]) == 2
    fail = write(tmp_path, cfg_text(extra="privacy.epsilons = 1e-5\nprivacy.delta = 1e-9\n"), "fail.cfg")
    assert main(["sweep", str(fail), "--out", str(tmp_path / "f")]) == 3
    boom = write(tmp_path, cfg_text("sgd", "algorithm.eta = 1e6\nproblem.kind = quadratic\n"), "boom.cfg")
    assert main(["sweep", str(boom), "--out", str(tmp_path / "b")]) == 4
    capsys.readouterr()


def test_cli_env_seed_override(tmp_path, monkeypatch, capsys):
    path = write(tmp_path, cfg_text(extra="privacy.epsilons = 1\nrun.seeds = 0, 1, 2\n"))
    monkeypatch.setenv("PAZO_SEED", "7")
    assert main(["sweep", str(path), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "summary.csv")
    assert [r["seed"] for r in rows] == ["7"]
    monkeypatch.setenv("PAZO_SEED", "x")
    assert main(["sweep", str(path), "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_cli_gamma(tmp_path, capsys):
    path = write(tmp_path, cfg_text(extra="privacy.epsilons = 1\n"))
    assert main(["sweep", str(path), "--out", str(tmp_path / "o")]) == 0
    log = tmp_path / "o" / "runs" / "pazo-m_eps1_seed0.jsonl"
    capsys.readouterr()
    assert main(["gamma", str(path), "--trajectory", str(log)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    gamma = float(out[-1].split("=")[1])
    logged = [json.loads(line)["gamma"] for line in log.read_text().splitlines()]
    assert math.isclose(gamma, logged[-1], rel_tol=1e-12)
