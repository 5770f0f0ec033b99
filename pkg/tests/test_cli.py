import csv
import json
import math
from pathlib import Path

import pytest

from natprob import cli
from natprob.experiments import SUITES

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


# -- validation -------------------------------------------------------------------


def test_minimal_chsh_config_valid(tmp_path):
    cfg = cli.validate(write(tmp_path, {"experiment": "chsh", "seed": 1}))
    assert cfg.experiment == "chsh" and cfg.seed == 1
    assert cfg.params == {} and cfg.output_dir == "results"


def test_negative_dimension_names_field(tmp_path):
    p = write(tmp_path, {"experiment": "algebra-verify", "seed": 0, "params": {"n_qubits": -3}})
    with pytest.raises(cli.ConfigError) as exc:
        cli.validate(p)
    assert any("params/n_qubits" in e for e in exc.value.errors)


def test_unknown_keys_all_listed(tmp_path):
    obj = {"experiment": "chsh", "seed": 0, "colour": 1, "params": {"angles": [0, 1, 2, 3], "bogus": True}}
    with pytest.raises(cli.ConfigError) as exc:
        cli.validate(write(tmp_path, obj))
    text = "\n".join(exc.value.errors)
    assert "colour" in text and "bogus" in text
    assert len(exc.value.errors) == 2


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(cli.ConfigError, match="not found"):
        cli.validate(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(cli.ConfigError, match="invalid JSON"):
        cli.validate(bad)


def test_seed_range_and_experiment_enum():
    with pytest.raises(cli.ConfigError):
        cli.validate_obj({"experiment": "chsh", "seed": 2**64})
    with pytest.raises(cli.ConfigError) as exc:
        cli.validate_obj({"experiment": "nonsense", "seed": 0})
    assert any("experiment" in e for e in exc.value.errors)
    with pytest.raises(cli.ConfigError):
        cli.validate_obj([1, 2])


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = cli.validate(path)
    assert cfg.experiment in SUITES


# -- formatting -------------------------------------------------------------------


def test_format_value_round_trips():
    x = 0.1 + 0.2
    assert float(cli.format_value(x)) == x
    assert cli.format_value(True) == "1"
    assert cli.format_value(7) == "7"
    assert cli.format_value(float("nan")) == "nan"
    assert cli.format_value("ghz") == "ghz"


# -- runs -------------------------------------------------------------------------


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_chsh_run_reports_tsirelson(tmp_path):
    code = cli.main(["run", str(CONFIGS / "chsh.json"), "--out", str(tmp_path)])
    assert code == 0
    res = json.loads((tmp_path / "results.json").read_text())
    assert abs(res["summary"]["abs_S"] - 2 * math.sqrt(2)) <= 1e-9
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "passed" and man["partial"] is False
    assert man["checks"]["failed"] == 0
    assert set(man["versions"]) >= {"natprob", "numpy", "python"}


def test_darwinism_run_eight_monotone_rows(tmp_path):
    obj = {"experiment": "darwinism-decay", "seed": 0, "params": {"n_env": 8, "overlaps": [0.7]}}
    code = cli.main(["run", str(write(tmp_path, obj)), "--out", str(tmp_path / "out")])
    assert code == 0
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert len(rows) == 8
    errs = [float(r["err"]) for r in rows]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_algebra_ghz_run(tmp_path):
    assert cli.main(["run", str(CONFIGS / "algebra_verify_ghz.json"), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "results.json").read_text())
    assert all(res["checks"].values())


def test_rerun_is_byte_identical(tmp_path):
    cfg = CONFIGS / "bell_feasibility.json"
    cli.main(["run", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["run", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_seed_override_changes_random_rows(tmp_path):
    cfg = CONFIGS / "chsh.json"
    cli.main(["run", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "99"])
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config"]["seed"] == 99


def test_exit_code_config_error(tmp_path, capsys):
    p = write(tmp_path, {"experiment": "chsh"})
    assert cli.main(["validate", str(p)]) == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    assert cli.main(["run", str(CONFIGS / "chsh.json"), "--seed", "-1"]) == cli.EXIT_CONFIG


def test_exit_code_check_failure(tmp_path):
    obj = {"experiment": "chsh", "seed": 0, "params": {"sweep_trials": 0, "expected_abs_S": 1.0}}
    code = cli.main(["run", str(write(tmp_path, obj)), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_FAIL
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "failed"


def test_exception_is_recorded_as_partial(tmp_path):
    # an all-zero amplitude vector cannot be normalized
    obj = {"experiment": "measurement-check", "seed": 0, "params": {"lambdas": [0, 0]}}
    cfg = cli.validate(write(tmp_path, obj))
    code, man = cli.run(cfg, tmp_path / "o")
    assert code == cli.EXIT_FAIL
    assert man["status"] == "error" and man["partial"] is True
    assert man["error"].startswith("measurement-check: ValueError")
    assert not (tmp_path / "o" / "results.csv").exists()


def test_validate_and_list_commands(capsys):
    assert cli.main(["validate", str(CONFIGS / "chsh.json")]) == 0
    assert "valid" in capsys.readouterr().out
    assert cli.main(["list-experiments"]) == 0
    assert capsys.readouterr().out.split() == sorted(SUITES)


def test_no_temp_files_left(tmp_path):
    cli.main(["run", str(CONFIGS / "chsh.json"), "--out", str(tmp_path)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "results.csv", "results.json"]
