# SEIR-KDPF
# Copyright (C) 2025 Ray
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import pathlib

import orjson
import pandas as pd
import pytest
from click.testing import CliRunner

from seirkdpf.config import Settings
from seirkdpf.main import EXIT_DEGENERATE, EXIT_INVALID, EXIT_OK, EXIT_USAGE, cli, cli_main

GUINEA = pathlib.Path(__file__).parents[1] / "data" / "guinea.csv"

REPORTS = """date,cum_cases,cum_deaths
2014-03-23,49,29
2014-03-27,60,35
2014-04-01,86,49
2014-04-02,90,51
2014-04-09,112,70
"""


@pytest.fixture
def reports_csv(tmp_path):
    path = tmp_path / "reports.csv"
    path.write_text(REPORTS)
    return path


def _fit(reports_csv, out, *extra):
    return cli_main(["fit", "--data", str(reports_csv), "--out", str(out), "--particles", "20", "--seed", "3", "--quiet", *extra])


def test_fit_writes_documented_outputs(reports_csv, tmp_path):
    out = tmp_path / "fit"
    assert _fit(reports_csv, out) == EXIT_OK
    for name in ("state_trajectory.csv", "param_trajectory.csv", "r0_trajectory.csv", "diagnostics.json"):
        assert (out / name).exists()
    r0 = pd.read_csv(out / "r0_trajectory.csv")
    assert list(r0.columns) == ["day_index", "date", "observed", "quantity", "mean", "median", "q05", "q95"]
    assert set(r0["quantity"]) == {"R0"}
    assert r0["day_index"].tolist() == list(range(18))
    assert (r0["q05"] > 0).all()
    diagnostics = orjson.loads((out / "diagnostics.json").read_bytes())
    assert diagnostics["num_particles"] == 20
    assert diagnostics["seed"] == 3
    assert [step["gap_days"] for step in diagnostics["steps"]] == [0, 4, 5, 1, 7]
    assert all(1.0 <= step["ess"] <= 20.0 for step in diagnostics["steps"])


def test_fit_outputs_identical_across_worker_counts(reports_csv, tmp_path):
    assert _fit(reports_csv, tmp_path / "one", "--workers", "1") == EXIT_OK
    assert _fit(reports_csv, tmp_path / "four", "--workers", "4") == EXIT_OK
    for name in ("state_trajectory.csv", "param_trajectory.csv", "r0_trajectory.csv", "diagnostics.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()


def test_fit_rejects_decreasing_cumulatives(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,cum_cases,cum_deaths\n2014-03-23,49,29\n2014-03-27,40,29\n")
    assert _fit(bad, tmp_path / "out") == EXIT_INVALID
    assert "row 3" in capsys.readouterr().err


def test_fit_rejects_unknown_config_key(reports_csv, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_bytes(orjson.dumps({"filter": {"particles": 10}}))
    assert _fit(reports_csv, tmp_path / "out", "--config", str(config)) == EXIT_INVALID
    assert "filter.particles" in capsys.readouterr().err


def test_fit_reports_degeneracy(reports_csv, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_bytes(orjson.dumps({"observation": {"sigma_I": 1e-200, "sigma_D": 1e-200, "sigma_space": "log"}}))
    assert _fit(reports_csv, tmp_path / "out", "--config", str(config)) == EXIT_DEGENERATE
    assert "day 0" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(reports_csv):
    assert cli_main(["fit", "--data", str(reports_csv), "--bogus"]) == EXIT_USAGE


def test_unknown_command_is_usage_error():
    assert cli_main(["smooth"]) == EXIT_USAGE


def test_help_exits_cleanly():
    assert cli_main(["--help"]) == EXIT_OK


def test_simulate_then_fit_writes_recovery(tmp_path):
    synthetic = tmp_path / "synthetic"
    assert cli_main(["simulate", "--days", "40", "--seed", "7", "--out", str(synthetic), "--quiet"]) == EXIT_OK
    for name in ("reports.csv", "latent_trajectory.csv", "truth.json"):
        assert (synthetic / name).exists()
    out = tmp_path / "fit"
    code = _fit(synthetic / "reports.csv", out, "--truth", str(synthetic / "truth.json"))
    assert code == EXIT_OK
    recovery = orjson.loads((out / "recovery.json").read_bytes())
    assert set(recovery["relative_errors"]) == {"alpha", "beta", "lambda", "gamma", "phi_f"}
    assert recovery["r0_rmse"] >= 0.0


def test_calibrate_prints_observation_block(tmp_path):
    synthetic = tmp_path / "synthetic"
    config = tmp_path / "tight.json"
    config.write_bytes(orjson.dumps({"observation": {"sigma_I": 0.05, "sigma_D": 0.05, "sigma_space": "log"}}))
    code = cli_main(["simulate", "--days", "60", "--seed", "2", "--out", str(synthetic), "--config", str(config), "--quiet"])
    assert code == EXIT_OK
    result = CliRunner().invoke(cli, [
        "calibrate", "--data", str(synthetic / "reports.csv"),
        "--latent", str(synthetic / "latent_trajectory.csv"), "--quiet",
    ])
    assert result.exit_code == 0, result.output
    block = orjson.loads(result.stdout)
    assert block["mode"] == "log-log"
    assert block["sigma_space"] == "log"
    assert block["zeta_I"] > 0


def test_snapshots_can_be_resummarized(reports_csv, tmp_path):
    out = tmp_path / "fit"
    assert _fit(reports_csv, out, "--save-snapshots") == EXIT_OK
    resummary = tmp_path / "resummary"
    code = cli_main([
        "summarize", "--snapshots", str(out / "snapshots.npz"), "--out", str(resummary),
        "--quantiles", "0.1,0.9", "--quiet",
    ])
    assert code == EXIT_OK
    header = (resummary / "param_trajectory.csv").read_text().splitlines()[0]
    assert header == "day_index,date,observed,quantity,mean,median,q10,q90"
    frame = pd.read_csv(resummary / "r0_trajectory.csv")
    assert frame["day_index"].tolist() == [0, 4, 9, 10, 17]
    assert frame["date"].iloc[0] == "2014-03-23"


def test_summarize_rejects_bad_quantiles(reports_csv, tmp_path):
    out = tmp_path / "fit"
    assert _fit(reports_csv, out, "--save-snapshots") == EXIT_OK
    code = cli_main(["summarize", "--snapshots", str(out / "snapshots.npz"), "--quantiles", "0.5,1.5"])
    assert code == EXIT_USAGE


def test_settings_read_from_environment(monkeypatch):
    monkeypatch.setenv("SEIRKDPF_WORKERS", "3")
    monkeypatch.setenv("SEIRKDPF_LOG_LEVEL", "DEBUG")
    settings = Settings()
    assert settings.workers == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_dir == "output"


@pytest.mark.slow
def test_fit_on_bundled_guinea_series(tmp_path):
    out = tmp_path / "guinea"
    assert cli_main(["fit", "--data", str(GUINEA), "--out", str(out), "--quiet"]) == EXIT_OK
    r0 = pd.read_csv(out / "r0_trajectory.csv").set_index("day_index")
    start = r0.loc[0, "mean"]
    assert 1.1 <= start <= 1.9
    # falls over the first 150 days
    assert r0.loc[120:150, "mean"].mean() < r0.loc[0:30, "mean"].mean()
    assert r0.loc[150, "mean"] < start
    # near one through the last quarter of 2014 (days 192 to 283)
    late = r0.loc[192:283, "mean"]
    assert 0.6 <= late.mean() <= 1.6
    # rises again at some later report
    observed = r0[r0["observed"]]
    after = observed.loc[150:, "mean"]
    assert (after.diff().dropna() > 0).any()
