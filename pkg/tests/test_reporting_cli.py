import io
import json
import os

import numpy as np
import pytest

from mvldp.cli import build_config, run
from mvldp.exceptions import ConfigError
from mvldp.reporting import (PLOT_KINDS, ExperimentConfig, ExperimentReport, dumps, emit_plot_data,
                             parse_config_text)


def _run(argv):
    buf = io.StringIO()
    code = run(argv, stdout=buf)
    return code, buf.getvalue()


def _strip_clock(text):
    return "\n".join(line for line in text.splitlines() if "wall_clock" not in line)


def test_config_text_parsing():
    cfg = parse_config_text("# header\nmodel = mfou  # trailing\nn-steps=32\n\nmodel=brownian\n")
    assert cfg == {"model": "brownian", "n_steps": "32"}
    with pytest.raises(ConfigError):
        parse_config_text("just words")


def test_flags_override_config_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("model = brownian\nparticles = 64\nseed = 5\n", encoding="utf-8")
    cfg = build_config(["simulate", "--config", str(f), "--particles", "128"])
    assert cfg.values["model"] == "brownian" and cfg.values["particles"] == 128 and cfg.seed == 5


def test_config_errors_exit_2(tmp_path, capsys):
    assert _run(["rate", "--model", "brownian", "--bogus", "1"])[0] == 2
    assert "--bogus" in capsys.readouterr().err
    f = tmp_path / "c.cfg"
    f.write_text("seed=1\nwidth=3\n", encoding="utf-8")
    assert _run(["simulate", "--config", str(f)])[0] == 2
    assert "width" in capsys.readouterr().err
    assert _run(["simulate", "--model", "mfou"])[0] == 2
    assert _run(["rate", "--model", "brownian"])[0] == 2
    assert _run(["ldp-verify", "--seed", "1", "--mode", "nope"])[0] == 2


def test_rate_example(tmp_path):
    code, out = _run(["rate", "--model", "brownian", "--event", "terminal:v=1,c=1", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads(out)
    assert rep["results"]["value"] == pytest.approx(0.5, rel=0.01)
    assert rep["rng_policy"] and len(rep["content_hash"]) == 64
    with open(tmp_path / "report.json", encoding="utf-8") as fh:
        assert fh.read().strip() == out.strip()


def test_selftest_passes():
    code, out = _run(["selftest"])
    assert code == 0 and json.loads(out)["passed"]


@pytest.mark.parametrize("threads", ["2", "3"])
def test_simulate_is_thread_invariant(threads):
    base = ["simulate", "--model", "mfou", "--particles", "300", "--n-steps", "32", "--seed", "11"]
    a = _run(base + ["--threads", "1"])[1]
    b = _run(base + ["--threads", threads])[1]
    assert _strip_clock(a) == _strip_clock(b)


def test_precision_and_nonfinite_formatting():
    text = dumps({"b": [1 / 3, np.inf, np.nan], "a": np.float64(2.0), "c": np.int64(3)}, precision=4)
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "0.3333" in text and '"inf"' in text and '"nan"' in text and "2.0" in text
    assert "0.33333" not in text


def test_content_hash_ignores_threads_and_out():
    a = ExperimentConfig("simulate", {"model": "mfou"}, seed=1, threads=1, out=None)
    b = ExperimentConfig("simulate", {"model": "mfou"}, seed=1, threads=8, out="x")
    c = ExperimentConfig("simulate", {"model": "mfou"}, seed=2)
    assert a.content_hash() == b.content_hash() != c.content_hash()


def test_plot_schemas(tmp_path):
    rep = ExperimentReport(ExperimentConfig("x", {}), results={
        "estimate": {"eps": [0.2, 0.1], "rate_hat": [0.6, 0.55], "rate_bounds": [(0.5, 0.7), (0.5, 0.6)],
                     "reference": 0.5},
        "convergence_trace": [0.3, 0.01],
        "levels": [{"j": 3, "u": 8, "d_alpha_to_K": 0.9, "A_jc": 4.0}],
        "continuity": {"intercept": 0.0, "slope": 1.0, "log_lags": [-3.0, -2.0], "log_mean_sq": [-3.1, -2.0]}})
    for kind, cols in PLOT_KINDS.items():
        path = emit_plot_data(rep, kind, str(tmp_path))
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines[0] == "# " + " ".join(cols)
        assert all(len(line.split()) == len(cols) for line in lines[1:])
    assert PLOT_KINDS["ldp-curve"] == ("eps", "minus_eps_log_p", "wilson_lo", "wilson_hi", "delta_ref")
    assert PLOT_KINDS["picard-trace"] == ("iteration", "sup_time_W2")
    assert PLOT_KINDS["strassen-j-sweep"] == ("j", "u", "d_alpha_to_K", "A_jc")
    with pytest.raises(ConfigError):
        emit_plot_data(rep, "histogram", str(tmp_path))


def test_picard_cli_writes_trace(tmp_path):
    code, out = _run(["picard", "--particles", "256", "--n-steps", "32", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    assert os.path.exists(tmp_path / "picard-trace.dat")


def test_ldp_cli_writes_cells_csv(tmp_path):
    code, _ = _run(["ldp-verify", "--mode", "sup-bound", "--replicas", "2000", "--n", "128", "--deltas", "1.0",
                    "--eps", "0.1", "--seed", "2", "--out", str(tmp_path)])
    assert code == 0
    lines = open(tmp_path / "cells.csv", encoding="utf-8").read().splitlines()
    assert lines[0].split(",")[:2] == ["delta", "eps"] and len(lines) == 2


def test_strassen_cli_writes_levels_csv(tmp_path):
    code, out = _run(["strassen", "--U", "16384", "--seeds", "4", "--n-per-unit", "8", "--n-z", "8",
                      "--dist-budget", "20", "--seed", "1", "--band-lo", "0", "--band-hi", "10",
                      "--out", str(tmp_path)])
    rep = json.loads(out)
    assert code == (0 if rep["passed"] else 1)
    lines = open(tmp_path / "levels.csv", encoding="utf-8").read().splitlines()
    assert lines[0] == "j,u,d_alpha_to_K,A_jc" and len(lines) == len(rep["results"]["levels"]) + 1
    assert os.path.exists(tmp_path / "strassen-j-sweep.dat")
