import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from mclt import cli, harness
from mclt.errors import ConfigError
from mclt.models import ModelCertificates, Rademacher, register


@register
class Overclaiming(Rademacher):
    """Rademacher steps with a false third-moment certificate, so cor1 is too small."""

    id = "overclaiming-test"

    @property
    def certificates(self):
        return ModelCertificates(alpha=1.0, gamma=1e-4, beta=1.0, delta=1.0, satisfies_condition2=True)


def run_cli(args, out, env=None):
    proc = subprocess.run(
        [sys.executable, "-m", "mclt", *args, "--out", str(out)],
        capture_output=True,
        text=True,
        env={**os.environ, **(env or {})},
    )
    return proc, out


def test_parse_config_text():
    text = """
    # comment
    model.id = pairswap
    model.n = 16   # trailing comment
    model.params.u = 0.25
    sim.reps = 2000
    bound.a = auto
    n_grid = 4, 8, 16
    """
    cfg = harness.config_from_flat(harness.parse_config_text(text))
    assert cfg.model == {"model.id": "pairswap", "model.n": 16, "model.params.u": 0.25}
    assert cfg.reps == 2000 and cfg.bound_a == "auto" and cfg.n_grid == (4, 8, 16)


@pytest.mark.parametrize(
    "text",
    [
        "model.id = rademacher\nmodel.id = pairswap",
        "model.id = rademacher\nnot a pair",
        "model.id = rademacher\nsim.colour = red",
        "model.id = rademacher\nsim.reps = 0",
        "model.id = rademacher\nsim.reps = 1.5",
        "model.id = rademacher\nbound.kind = thm9",
        "model.id = rademacher\nbound.a = soon",
        "model.id = rademacher\nbound.a = -1",
        "model.id = rademacher\nn_grid = 8, 4, 16",
        "model.id = rademacher\nsim.seed = -3",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        harness.config_from_flat(harness.parse_config_text(text))


def test_verify_cor1_row():
    cfg = harness.config_from_flat({"model.id": "rademacher", "model.n": 100, "bound.kind": "cor1", "sim.reps": 20_000})
    row = harness.run_verify(cfg)
    assert row.bound_value == pytest.approx(1.6815511, abs=1e-6)
    assert row.passed and row.a is None


def test_verify_thm1_auto_matches_exact_distance():
    cfg = harness.config_from_flat({"model.id": "rademacher", "model.n": 100, "bound.a": "auto"})
    row = harness.run_verify(cfg)
    assert row.passed and row.mc_stderr == 0.0
    k = np.arange(101)
    from scipy import stats

    exact = oracles.dw_discrete_vs_normal((2 * k - 100) / 10, stats.binom.pmf(k, 100, 0.5))
    assert exact == pytest.approx(0.0500, abs=1e-3)
    assert abs(row.dw_est - exact) <= 3 * row.dw_stderr + 1e-3


def test_verify_requires_condition2_for_thm1():
    cfg = harness.config_from_flat({"model.id": "drifting-variance", "model.n": 8})
    with pytest.raises(ConfigError):
        harness.run_verify(cfg)


def test_verify_drifting_cond2_dev_matches_enumeration():
    cfg = harness.config_from_flat(
        {"model.id": "drifting-variance", "model.n": 4, "bound.kind": "cor3", "sim.reps": 100_000}
    )
    row = harness.run_verify(cfg)
    exact = oracles.exact_moments("drifting-variance", 4, theta=0.5)["cond2_dev"]
    assert row.cond2_dev == pytest.approx(exact, abs=0.005)


def test_csv_schema_and_precision():
    cfg = harness.config_from_flat({"model.id": "pairswap", "model.n": 8, "sim.reps": 3000, "bound.kind": "thm2"})
    row = harness.run_verify(cfg)
    text = harness.render_csv([row])
    lines = text.splitlines()
    assert lines[0] == ",".join(harness.VERIFY_COLUMNS)
    rec = next(csv.DictReader(io.StringIO(text)))
    assert float(rec["bound_value"]) == row.bound_value
    assert float(rec["dw_est"]) == row.dw_est
    assert rec["pass"] in ("true", "false")
    assert rec["model"] == "pairswap" and rec["n"] == "8" and rec["reps"] == "3000"


def test_rate_scan():
    cfg = harness.config_from_flat(
        {"model.id": "rademacher", "bound.kind": "cor1", "n_grid": "16, 64, 256", "sim.reps": 20_000}
    )
    report = harness.run_rate_scan(cfg)
    assert [r.n for r in report.rows] == [16, 64, 256]
    assert np.isfinite(report.slope) and -0.7 < report.slope < -0.3
    with pytest.raises(ConfigError):
        harness.run_rate_scan(harness.config_from_flat({"model.id": "rademacher", "n_grid": "16, 64"}))


def test_emit_report(tmp_path):
    cfg = harness.config_from_flat({"model.id": "rademacher", "model.n": 4, "sim.reps": 500})
    row = harness.run_verify(cfg)
    path = harness.emit_report([row], tmp_path / "r.csv")
    assert open(path).read() == harness.render_csv([row])


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "a.csv")
    assert cli.main(["verify", "--model", "rademacher", "--n", "16", "--reps", "2000", "--out", out]) == 0
    assert cli.main(["verify", "--model", "drifting-variance", "--n", "16", "--reps", "2000", "--out", out]) == 1
    assert cli.main(["verify", "--model", "nope", "--n", "4", "--out", out]) == 1
    assert cli.main(["verify", "--n", "4", "--out", out]) == 1
    assert cli.main(["verify", "--model", "pairswap", "--n", "4", "--param", "u", "--out", out]) == 1
    completed = ["--model", "completed", "--n", "4", "--param", "beta=2", "--param", "base.id=pairswap"]
    assert cli.main(["verify", *completed, "--a", "0", "--reps", "2000", "--out", out]) == 2
    assert cli.main(["verify", *completed, "--a", "auto", "--reps", "2000", "--out", out]) == 0
    overclaim = ["verify", "--model", "overclaiming-test", "--n", "16", "--bound", "cor1", "--reps", "2000"]
    assert cli.main([*overclaim, "--out", out]) == 3
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "--bound", "thm7"])
    assert info.value.code == 1
    capsys.readouterr()


def test_cli_stdout_and_config_file(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("model.id = pairswap\nmodel.n = 8\nsim.reps = 1000\nbound.kind = cor2\n")
    assert cli.main(["verify", "--config", str(conf), "--seed", "5"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["seed"] == "5" and rows[0]["bound_kind"] == "cor2"
    assert cli.main(["verify", "--config", str(tmp_path / "missing.conf")]) == 1


def test_cli_models_and_stein(capsys):
    assert cli.main(["models", "list"]) == 0
    assert "pairswap" in capsys.readouterr().out
    assert cli.main(["stein-check", "--h", "sin", "--s", "1", "--t", "2", "--points", "401"]) == 0
    assert "yes" in capsys.readouterr().out


def test_cli_output_independent_of_threads(tmp_path):
    args = ["verify", "--model", "pairswap", "--n", "32", "--reps", "20000", "--a", "auto"]
    out1, out8 = tmp_path / "one.csv", tmp_path / "eight.csv"
    p1, _ = run_cli(args, out1, env={"MCLT_THREADS": "1"})
    p8, _ = run_cli(args, out8, env={"MCLT_THREADS": "8"})
    assert p1.returncode == 0 and p8.returncode == 0, p1.stderr + p8.stderr
    assert out1.read_bytes() == out8.read_bytes()
