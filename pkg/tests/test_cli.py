import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from evflow.cli import config as cfg
from evflow.cli.main import ConfigError, load_config, main, run

SMALL = {
    "spectrum": ["--N", "20", "--draws", "2"],
    "dbm": ["--N", "6", "--t_end", "0.02", "--dt", "0.01"],
    "vectorflow": ["--N", "3", "--t_end", "0.01", "--trials", "200", "--micro_dt", "1e-3"],
    "momentflow": ["--N", "4", "--n", "2", "--t_end", "0.1", "--snapshots", "2"],
    "fsp": ["--N", "30", "--ell", "5", "--t_end", "0.1", "--ells", "5,10"],
    "que": ["--N", "20", "--draws", "3"],
    "normality": ["--N", "20", "--draws", "30", "--indices", "8,10"],
    "wishart": ["--N", "6", "--t_end", "0.1", "--dt", "0.05"],
}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- config grammar ------------------------------------------------------------------


def test_parse_text_grammar():
    text = """
    # comment line
    N = 12        # trailing comment
    tol = 1e-9
    rescale = true
    indices = 3, 4,5
    q_kind = uniform
    N = 14
    """
    values, diags = cfg.parse_text(text)
    assert diags == []
    assert values == {"N": 14, "tol": 1e-9, "rescale": True, "indices": (3, 4, 5), "q_kind": "uniform"}


def test_parse_text_diagnostics():
    values, diags = cfg.parse_text("bogus = 1\nN = twelve\njust words\ntol = nan\n")
    assert values == {}
    assert len(diags) == 4
    assert any("unknown key 'bogus'" in d for d in diags)
    assert any("line 3" in d for d in diags)


def test_empty_config_echoes_defaults_without_diagnostics(capsys):
    assert cfg.validate({}) == []
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(cfg.SCHEMA)
    assert "N = 8" in lines


@pytest.mark.parametrize(
    "values,fragment",
    [
        ({"ell": 9}, "cutoff exceeds dimension"),
        ({"symmetry": "covariance", "M": 4}, "M >= N"),
        ({"N": 1}, "N must be at least 2"),
        ({"orders": 5}, "orders must be"),
        ({"alpha": 0.3}, "alpha"),
        ({"flow": "ou", "symmetry": "hermitian"}, "OU flow"),
        ({"experiment": "normality", "draws": 10}, "at least 30"),
        ({"q_kind": "other"}, "q_kind"),
    ],
)
def test_validate_diagnostics(values, fragment):
    diags = cfg.validate(values)
    assert any(fragment in d for d in diags), diags


def test_validate_lists_every_problem_and_does_not_mutate():
    c = {"N": 4, "ell": 9, "tol": -1.0, "alpha": 0.5}
    before = dict(c)
    assert len(cfg.validate(c)) >= 3
    assert c == before


def test_validate_cli_reports_diagnostics(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("N = 4\nell = 9\n")
    assert main(["validate", "--config", str(conf)]) == 2
    assert "cutoff exceeds dimension" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("N = 4\nseed = 3\n")
    c = load_config(conf, {"N": "6"}, "momentflow")
    assert c["N"] == 6 and c["seed"] == 3 and c["experiment"] == "momentflow"
    with pytest.raises(ConfigError):
        load_config(conf, {"tol": "abc"}, "momentflow")


def test_config_hash_ignores_output_location():
    a = cfg.resolve({"N": 5, "output_dir": "x", "threads": 2})
    b = cfg.resolve({"N": 5})
    assert cfg.config_hash(a) == cfg.config_hash(b)
    assert cfg.config_hash(b) != cfg.config_hash(cfg.resolve({"N": 6}))


# --- runs --------------------------------------------------------------------------------


def test_momentflow_two_state_csv(tmp_path):
    out = tmp_path / "mf"
    code = main(["momentflow", "--N", "2", "--n", "1", "--lambda_span", "1", "--t_end", "1",
                 "--tol", "1e-12", "--output_dir", str(out)])
    assert code == 0
    rows = read_rows(out / "field.csv")
    assert rows[0] == ["config_index", "config", "value"]
    f = {r[1]: float(r[2]) for r in rows[1:]}
    # q = e1, u0 = I: f0 = (2, 0), c12 = 1/8
    assert abs((f["1:1"] - f["2:1"]) - 2 * np.exp(-0.5)) < 1e-8
    traj = read_rows(out / "trajectory.csv")[1:]
    for t, _, label, v in traj:
        if label == "1:1":
            other = next(float(r[3]) for r in traj if r[0] == t and r[2] == "2:1")
            assert abs(float(v) - other - 2 * np.exp(-0.5 * float(t))) < 1e-8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["artifacts"] == sorted(["field.csv", "trajectory.csv", "trace.csv", "max_principle.csv"])
    assert manifest["tainted"] is False and manifest["summary"]["max_principle_violations"] == 0
    for key in ("config_hash", "seed", "wall_clock_s", "guard_triggers", "version", "config"):
        assert key in manifest


@pytest.mark.parametrize("experiment", sorted(SMALL))
def test_every_experiment_is_byte_deterministic(experiment, tmp_path):
    outs = [tmp_path / f"run{i}" for i in range(2)]
    for i, out in enumerate(outs):
        threads = ["--threads", str(1 + 2 * i)]
        assert main([experiment, *SMALL[experiment], "--seed", "11", "--output_dir", str(out), *threads]) == 0
    m0 = json.loads((outs[0] / "manifest.json").read_text())
    m1 = json.loads((outs[1] / "manifest.json").read_text())
    assert m0["config_hash"] == m1["config_hash"]
    csvs = [a for a in m0["artifacts"] if a.endswith(".csv")]
    assert csvs
    for name in csvs:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_seed_changes_output(tmp_path):
    for seed in ("1", "2"):
        assert main(["que", *SMALL["que"], "--seed", seed, "--output_dir", str(tmp_path / seed)]) == 0
    assert (tmp_path / "1" / "que.csv").read_bytes() != (tmp_path / "2" / "que.csv").read_bytes()


def test_enumeration_cap_exit_code(tmp_path, capsys):
    code = main(["momentflow", "--N", "200", "--n", "4", "--output_dir", str(tmp_path)])
    assert code == 4
    assert "exceeds the cap" in capsys.readouterr().err


def test_validation_exit_code(tmp_path, capsys):
    assert main(["fsp", "--N", "10", "--ell", "20", "--output_dir", str(tmp_path)]) == 2
    assert "cutoff exceeds dimension" in capsys.readouterr().err


def test_numeric_exit_code(tmp_path, capsys):
    # eigenvalues closer than the stability budget allows
    code = main(["vectorflow", "--N", "4", "--lambda_span", "0.01", "--micro_dt", "0.01",
                 "--trials", "100", "--output_dir", str(tmp_path)])
    assert code == 3
    assert "stability" in capsys.readouterr().err


def test_guard_triggers_mark_run_tainted(tmp_path):
    out = tmp_path / "t"
    assert main(["momentflow", "--N", "3", "--lambda_span", "0.001", "--gap_guard", "0.1",
                 "--t_end", "0.01", "--output_dir", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["guard_triggers"] > 0 and m["tainted"] is True


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EVFLOW_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["wishart", *SMALL["wishart"]]) == 0
    assert (tmp_path / "env" / "wishart" / "manifest.json").exists()


def test_run_api_returns_manifest(tmp_path):
    m = run(cfg.resolve({"experiment": "dbm", "N": 5, "t_end": 0.02, "dt": 0.01, "output_dir": str(tmp_path)}))
    assert m["experiment"] == "dbm" and "path.csv" in m["artifacts"]
    rows = read_rows(tmp_path / "path.csv")
    assert rows[0] == ["time", "k", "lambda"] and len(rows) == 1 + 3 * 5
    # 17 significant digits round-trip exactly
    assert all(float(repr(float(r[2]))) == float(r[2]) for r in rows[1:])


def test_rescale_flag_writes_rescaled_clock(tmp_path):
    out = tmp_path / "r"
    assert main(["momentflow", "--N", "4", "--path", "dbm", "--rescale", "true", "--t_end", "0.05",
                 "--output_dir", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    N = 4
    assert m["summary"]["t_eval"] == pytest.approx(N / (N + 1) * np.log1p((N + 1) * 0.05 / N))


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "evflow", "validate", "--N", "5"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "N = 5" in proc.stdout
