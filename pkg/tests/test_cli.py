import json

import pytest

from frugal_ris.cli import main
from frugal_ris.harness import csv_header, read_csv

SMALL_TOML = """
[scenario]
rows = 16
cols = 16
n_tx = 64

[grid]
cfo_points = 128
cfo_points_ml = 128
aod_points = 32

[run]
trials = 2

[detector]
calibration_trials = 2
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_TOML)
    return str(path)


def test_sweep_writes_one_row_per_power(cfg, tmp_path):
    out = tmp_path / "run.csv"
    code = main(["sweep", "los_power", "--config", cfg, "--trials", "2",
                 "--power-dbm", "30,40", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [r["value"] for r in rows] == [30.0, 40.0]
    assert list(rows[0]) == csv_header(2)


def test_crb_rows(cfg, capsys):
    assert main(["crb", "--config", cfg, "--power-dbm", "35"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("hypothesis,power_dbm,peb_m")
    assert [l.split(",")[0] for l in lines[1:]] == ["los", "nlos"]


def test_simulate_json(cfg, capsys):
    assert main(["simulate", "--config", cfg, "--power-dbm", "40", "--seed", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["estimate"]["hypothesis"] == "los"
    assert report["position_error_m"] < 1.0


def test_detect(cfg, tmp_path, capsys):
    out = tmp_path / "det.csv"
    assert main(["detect", "--config", cfg, "--power-dbm", "40", "--out", str(out)]) == 0
    assert "threshold" in capsys.readouterr().err
    assert [r["sweep_var"] for r in read_csv(out)] == ["power_dbm_nlos", "power_dbm_los"]


def test_missing_config_exit_2(tmp_path, capsys):
    missing = tmp_path / "absent.toml"
    assert main(["crb", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["sweep", "nope"], ["crb", "--frobnicate"], [],
                                  ["crb", "--power-dbm", "x,y"]])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_bad_config_value_exit_2(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[run]\ntrials = 0\n")
    assert main(["crb", "--config", str(path)]) == 2


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0
    assert "sweep" in capsys.readouterr().out
