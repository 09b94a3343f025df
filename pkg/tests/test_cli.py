import json
import os

import numpy as np
import pytest

from bigjump.cli import (
    config_hash,
    emit_config,
    main,
    parse_config,
    parse_extras,
)
from bigjump.errors import ConfigurationError
from bigjump.events import TerminalExceed
from bigjump.paths import read_path_csv

BASE = """
model = mb
lambda_rate = 1.0
T_horizon = 50.0
eta_exponent = 0.8
mark_family = pareto
mark_alpha = 1.5
mark_scale = 1.0
dependence = independent_light_k
k_param = 0.0
event = terminal_exceed:1.0
n_reps = 2000
seed_root = 4242
n_strata = 800
n_pbig = 60000
grid_n = 256
estimator = crude
"""


def test_parse_round_trip():
    cfg = parse_config(BASE)
    assert cfg.T == 50.0 and cfg.seed == 4242
    assert cfg.event == TerminalExceed(1.0)
    again = parse_config(emit_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_parse_round_trip_fuzzed():
    rng = np.random.default_rng(0)
    for _ in range(100):
        alpha = float(rng.uniform(1.1, 3.0))
        eta = float(rng.uniform(max(1.0 / alpha, 0.5) + 0.02, 0.99))
        nu = float(rng.uniform(0.0, 3.0))
        lines = BASE.replace("mark_alpha = 1.5", f"mark_alpha = {alpha!r}")
        lines = lines.replace("eta_exponent = 0.8", f"eta_exponent = {eta!r}")
        lines = lines.replace("k_param = 0.0", f"k_param = {nu!r}")
        cfg = parse_config(lines)
        assert parse_config(emit_config(cfg)) == cfg


def test_parse_rejects_eta_below_bound():
    with pytest.raises(ConfigurationError, match="eta"):
        parse_config(BASE.replace("eta_exponent = 0.8", "eta_exponent = 0.6"))


def test_parse_rejects_supercritical():
    # phi*E[X] = 0.4 * 3 = 1.2 >= 1
    bad = BASE.replace("k_param = 0.0", "k_param = 0.0\nphi_fertility = 0.4")
    with pytest.raises(ConfigurationError, match="supercritical"):
        parse_config(bad)


def test_parse_names_offending_key():
    with pytest.raises(ConfigurationError, match="mystery_key"):
        parse_config(BASE + "\nmystery_key = 3")
    with pytest.raises(ConfigurationError, match="seed_root"):
        parse_config(BASE.replace("seed_root = 4242", ""))
    with pytest.raises(ConfigurationError, match="lambda_rate"):
        parse_config(BASE.replace("lambda_rate = 1.0", "lambda_rate = abc"))
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_config(BASE + "\nmodel = mb")


def test_extras_defaults():
    extras = parse_extras(BASE)
    assert extras["check_T_grid"] == "25,50,100,200"
    extras = parse_extras(BASE + "\ncheck_T_grid = 10,20")
    assert extras["check_T_grid"] == "10,20"


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_simulate_zero_rate(tmp_path):
    cfg = _write(tmp_path, BASE.replace("lambda_rate = 1.0", "lambda_rate = 0.0"))
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "path.csv")) as fh:
        path = read_path_csv(fh)
    assert path.n_nodes == 2
    assert np.all(path.right == 0.0) and np.all(path.left == 0.0)
    assert os.path.exists(os.path.join(out, "clusters.csv"))


def test_cli_measure_closed_form(tmp_path, capsys):
    text = BASE.replace("event = terminal_exceed:1.0", "event = terminal_exceed:4.0")
    cfg = _write(tmp_path, text)
    assert main(["measure", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "mu_bar_tail = 0.125" in out


def test_cli_m1_subcommand(tmp_path, capsys):
    from bigjump.paths import build_jump_path, write_path_csv

    p1 = build_jump_path(np.array([0.5]), np.array([1.0]))
    p2 = build_jump_path(np.array([0.5]), np.array([2.0]))
    f1, f2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    for f, p in ((f1, p1), (f2, p2)):
        with open(f, "w") as fh:
            write_path_csv(p, fh)
    assert main(["m1", f1, f2, "--tol", "1e-9"]) == 0
    out = capsys.readouterr().out
    assert "m1_distance = 1.0" in out
    assert "bracket" in out


def test_cli_ldp_rows_identical_across_workers(tmp_path):
    cfg = _write(tmp_path, BASE)
    rows = []
    for i, workers in enumerate((1, 2)):
        out = str(tmp_path / f"out{i}")
        assert main(["ldp", "--config", cfg, "--out", out, "--workers", str(workers)]) == 0
        with open(os.path.join(out, "results.csv")) as fh:
            header, row = fh.read().strip().split("\n")
        cols = dict(zip(header.split(","), row.split(",")))
        cols.pop("wall_seconds")  # timing is the one nondeterministic column
        rows.append(cols)
    assert rows[0] == rows[1]


def test_cli_ldp_env_worker_override(tmp_path, monkeypatch):
    cfg = _write(tmp_path, BASE)
    out = str(tmp_path / "env_out")
    monkeypatch.setenv("BIGJUMP_WORKERS", "2")
    assert main(["ldp", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, f"ldp_{config_hash(parse_config(BASE))}.json")) as fh:
        summary = json.load(fh)
    assert summary["probability"] > 0


def test_cli_check_assumption6(tmp_path):
    cfg = _write(tmp_path, BASE)
    out = str(tmp_path / "chk")
    assert main(["check", "assumption6", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "check_assumption6.json")) as fh:
        verdict = json.load(fh)
    assert verdict["verdict"] == "holds" and verdict["pass"]


def test_cli_check_violated_exit_code(tmp_path):
    text = BASE + "wait_family = pareto\nwait_alpha = 0.5\nwait_scale = 1.0\n"
    cfg = _write(tmp_path, text, name="heavy_wait.cfg")
    out = str(tmp_path / "chk2")
    assert main(["check", "assumption6", "--config", cfg, "--out", out]) == 1
    with open(os.path.join(out, "check_assumption6.json")) as fh:
        verdict = json.load(fh)
    assert verdict["verdict"] == "violated" and not verdict["pass"]


def test_cli_error_exit_code(tmp_path):
    cfg = _write(tmp_path, BASE.replace("eta_exponent = 0.8", "eta_exponent = 0.2"))
    out = str(tmp_path / "never")
    assert main(["ldp", "--config", cfg, "--out", out]) == 2
    assert not os.path.exists(out)


def test_cli_simulate_branching_model(tmp_path):
    text = BASE.replace("model = mb", "model = hawkes").replace(
        "k_param = 0.0", "k_param = 0.0\nphi_fertility = 0.16666666666666666"
    ).replace("n_centering = 200000", "")
    text += "n_centering = 20000\n"
    cfg = _write(tmp_path, text, name="hawkes.cfg")
    out = str(tmp_path / "hout")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "clusters.csv")) as fh:
        header = fh.readline().strip()
    assert header == "cluster_id,event_id,parent_id,generation,offset,mark"
