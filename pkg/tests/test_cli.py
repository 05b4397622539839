import hashlib
import json
from pathlib import Path

import pytest

from cqclab import cli
from cqclab.config import ConfigError, load_config

ROOT = Path(__file__).resolve().parents[1]

COLLAPSE = """
kind = "collapse"
master_seed = 5

[collapse]
alpha = [0.5477225575051661, 0.8366600265340756]
a = [0.0, 1.0]
lam = 1.0
t = 10.0
dt = 0.02
n_traj = 4000
dump_trajectories = 1
"""

SPINS = """
kind = "spins"
master_seed = 3

[spins]
N = 200
betaC = 0.01
n_samples = 2000
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_collapse_run_passes(tmp_path, capsys):
    cfg = _write(tmp_path, COLLAPSE)
    assert cli.main(["collapse", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    rec = json.loads((tmp_path / "run" / "run_record.json").read_text())
    assert rec["kind"] == "collapse" and all(c["passed"] for c in rec["checks"].values())
    assert "trajectory_00000.bin" in rec["outputs"]
    assert "[PASS] born_within_3sigma" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SPINS)
    a = cli.run_experiment(load_config(cfg, {"out": str(tmp_path / "a")}))
    b = cli.run_experiment(load_config(cfg, {"out": str(tmp_path / "b")}))
    csvs = {k: v for k, v in a.outputs.items() if k.endswith(".csv")}
    assert csvs and all(b.outputs[k] == v for k, v in csvs.items())


def test_rerun_from_resolved_config(tmp_path):
    cfg = _write(tmp_path, SPINS)
    assert cli.main(["spins", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    resolved = tmp_path / "a" / "resolved_config.json"
    data = json.loads(resolved.read_text())
    assert data["spins"]["N"] == 200 and data["threads"] >= 1
    assert cli.main(["spins", "--config", str(resolved), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "spins_pmf.csv").read_bytes() == (tmp_path / "b" / "spins_pmf.csv").read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, SPINS)
    cli.main(["spins", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["spins", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    assert (tmp_path / "a" / "spins_pmf.csv").read_bytes() != (tmp_path / "b" / "spins_pmf.csv").read_bytes()


def test_negative_lambda_names_field(tmp_path, capsys):
    cfg = _write(tmp_path, COLLAPSE.replace("lam = 1.0", "lam = -1.0"))
    assert cli.main(["collapse", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "collapse.lam" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    SPINS + "bogus = 1\n",
    SPINS.replace('kind = "spins"', 'kind = "nonsense"'),
    SPINS.replace("N = 200", "N = 0"),
    "kind = \"spins\"\n",
    "not toml [",
])
def test_bad_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_kind_mismatch_and_missing_file(tmp_path):
    cfg = _write(tmp_path, SPINS)
    assert cli.main(["timeop", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["spins", "--config", str(tmp_path / "missing.toml")]) == 2


def test_failed_check_exit_code(tmp_path):
    cfg = _write(tmp_path, SPINS)
    assert cli.main(["spins", "--config", cfg, "--out", str(tmp_path / "x"), "--tolerance-scale", "1e-9"]) == 3


def test_numerical_error_exit_code(tmp_path):
    text = """
kind = "timeop"
[timeop]
alpha = [1.0]
a = [1.0]
lam = 1.0
t_values = [2000.0]
"""
    assert cli.main(["timeop", "--config", _write(tmp_path, text), "--out", str(tmp_path / "x")]) == 4


def test_plot_data(tmp_path):
    cfg = _write(tmp_path, SPINS)
    rec = cli.run_experiment(load_config(cfg, {"out": str(tmp_path / "run")}))
    dest = cli.emit_plot_data(rec, "spins_pmf", tmp_path / "plot.csv")
    lines = dest.read_text().splitlines()
    assert lines[0] == "s,exact,gaussian,empirical" and len(lines) == 202
    with pytest.raises(KeyError):
        cli.emit_plot_data(rec, "no_such_output", tmp_path / "p.csv")
    with pytest.raises(KeyError):
        cli.emit_plot_data(rec, "energy_total", tmp_path / "p.csv")
    assert cli.main(["plot-data", "--record", str(tmp_path / "run" / "run_record.json"), "--which", "bogus",
                     "--dest", str(tmp_path / "p.csv")]) == 2


def test_plot_data_header_only(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    text = "t,mean_T,second_moment_T,variance_T,center_of_time\n"
    (out / "timeop_moments.csv").write_text(text)
    rec = cli.RunRecord("timeop", {}, "0", 0.0, {}, {"timeop_moments.csv": hashlib.sha256(text.encode()).hexdigest()}, str(out))
    dest = cli.emit_plot_data(rec, "timeop_moments", tmp_path / "p.csv")
    assert dest.read_text() == text


def test_plot_data_detects_tampering(tmp_path):
    cfg = _write(tmp_path, SPINS)
    rec = cli.run_experiment(load_config(cfg, {"out": str(tmp_path / "run")}))
    (tmp_path / "run" / "spins_pmf.csv").write_text("s\n")
    with pytest.raises(Exception, match="digest"):
        cli.emit_plot_data(rec, "spins_pmf", tmp_path / "p.csv")


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.toml")))
def test_shipped_configs_parse(name):
    cfg = load_config(ROOT / "configs" / name)
    assert cfg.kind in name or cfg.kind in ("collapse", "energy")


def test_verify_subset(tmp_path, capsys):
    assert cli.main(["verify", "--only", "9", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[PASS]") and "Parameter audit" in out
    assert (tmp_path / "acceptance.csv").exists()
