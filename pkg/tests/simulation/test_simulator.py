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
from datetime import date

import numpy as np
import pytest

from seirkdpf.core.model import CompartmentState, deterministic_step, r0
from seirkdpf.core.observation import ObservationLink, SigmaSpace, effective_sigmas, predicted_log_means
from seirkdpf.core.sampling import OMEGA
from seirkdpf.core.summary import TrajectorySummary
from seirkdpf.data_sources.reports import parse_report_csv
from seirkdpf.errors import DomainError, SummaryError
from seirkdpf.filtering.kdpf import run_filter
from seirkdpf.priors.spec import PriorSpec, load_run_config, prior_means
from seirkdpf.simulation.simulator import (
    default_report_days,
    read_latent_trajectory,
    read_truth,
    recovery_report,
    simulate,
    write_synthetic_run,
)

RECOVERY_CONFIG = pathlib.Path(__file__).parents[2] / "configs" / "recovery.json"


@pytest.fixture
def truth():
    return prior_means(PriorSpec())


@pytest.fixture
def log_link():
    return ObservationLink(sigma_I=0.05, sigma_D=0.05, sigma_space=SigmaSpace.LOG)


def test_noiseless_run_follows_deterministic_model(truth):
    x0, theta = truth
    link = ObservationLink()
    run = simulate(theta, x0, 30, [0, 7, 15, 30], link, seed=1, process_noise=False, observation_noise=False)
    x = x0
    for t in range(1, 31):
        x = deterministic_step(x, theta)
        np.testing.assert_allclose(run.latent[t], x.as_array(), rtol=1e-12)
    means = np.exp(predicted_log_means(run.latent[[0, 7, 15, 30]], link))
    expected = np.maximum(np.rint(means), 1)
    assert [r.cum_cases for r in run.reports.records] == expected[:, 0].astype(int).tolist()
    assert [r.day_index for r in run.reports.records] == [0, 7, 15, 30]


def test_fixed_seed_reproduces_run(truth, log_link):
    x0, theta = truth
    a = simulate(theta, x0, 60, None, log_link, seed=7)
    b = simulate(theta, x0, 60, None, log_link, seed=7)
    np.testing.assert_array_equal(a.latent, b.latent)
    assert a.reports == b.reports
    c = simulate(theta, x0, 60, None, log_link, seed=8)
    assert not np.array_equal(a.latent, c.latent)


def test_latent_stays_admissible_and_counts_monotone(truth):
    x0, theta = truth
    run = simulate(theta, x0, 120, None, ObservationLink(), seed=3)
    assert all(OMEGA.contains(x) for x in run.latent)
    cases = [r.cum_cases for r in run.reports.records]
    deaths = [r.cum_deaths for r in run.reports.records]
    assert cases == sorted(cases) and deaths == sorted(deaths)
    assert all(d <= c for c, d in zip(cases, deaths))
    assert min(deaths) >= 1


def test_prior_mean_outbreak_grows_while_r0_above_one(truth, log_link):
    x0, theta = truth
    assert r0(x0, theta) > 1.0
    run = simulate(theta, x0, 120, None, log_link, seed=2, observation_noise=False)
    infected = run.latent[:, 2] + run.latent[:, 3]
    assert infected[30] > infected[0]


def test_default_calendar_gaps_within_a_week():
    days = default_report_days(120, 5)
    gaps = np.diff(days)
    assert days[0] == 0
    assert days[-1] <= 120
    assert gaps.min() >= 1 and gaps.max() <= 7
    assert days == default_report_days(120, 5)


@pytest.mark.parametrize("report_days", [[1, 5], [0, 5, 5], [0, 200]])
def test_report_days_validated(truth, report_days):
    x0, theta = truth
    with pytest.raises(DomainError):
        simulate(theta, x0, 100, report_days, ObservationLink(), seed=0)


def test_initial_state_must_be_admissible(truth):
    _, theta = truth
    with pytest.raises(DomainError):
        simulate(theta, CompartmentState(0.4, 0.6, 0.6, 0.0, 0.0), 10, None, ObservationLink())


def test_written_run_round_trips(truth, log_link, tmp_path):
    x0, theta = truth
    run = simulate(theta, x0, 40, None, log_link, seed=4, epoch=date(2020, 1, 1))
    paths = write_synthetic_run(run, tmp_path / "synthetic")
    assert parse_report_csv(paths["reports"]) == run.reports
    np.testing.assert_array_equal(read_latent_trajectory(paths["latent"]), run.latent)
    params, document = read_truth(paths["truth"])
    assert params == theta
    assert document["seed"] == 4


def _summary_from_truth(run, theta, spread=0.0):
    rows = []
    values = theta.as_dict()
    true_r0 = run.true_r0()
    for record in run.reports.records:
        day = record.day_index
        for name, value in values.items():
            rows.append({"day_index": day, "date": "", "observed": True, "quantity": name,
                         "mean": value * (1 + spread), "median": value, "q05": value * 0.9, "q95": value * 1.1})
        r = true_r0[day] * (1 + spread)
        rows.append({"day_index": day, "date": "", "observed": True, "quantity": "R0",
                     "mean": r, "median": r, "q05": r * 0.9, "q95": r * 1.1})
    return TrajectorySummary.from_rows(rows)


def test_default_reports_track_link_mean_within_noise_band(truth):
    x0, theta = truth
    link = ObservationLink()
    run = simulate(theta, x0, 120, None, link, seed=7)
    days = [obs.day_index for obs in run.reports.records]
    counts = np.array([[obs.cum_cases, obs.cum_deaths] for obs in run.reports.records], dtype=float)
    mu = predicted_log_means(run.latent[days], link)
    sigma = np.array(effective_sigmas(link, np.exp(mu[:, 0]), np.exp(mu[:, 1])))
    # log-normal draws within 4 sigma; rounding and the cumulative repair move counts by at most one person
    assert np.all(np.log(counts) <= mu + 4 * sigma + 0.5)
    assert np.all(np.log(counts + 1) >= mu - 4 * sigma - 0.5)


def test_default_reports_keep_deaths_apart_from_cases(truth):
    x0, theta = truth
    run = simulate(theta, x0, 120, None, ObservationLink(), seed=7)
    cases = np.array([obs.cum_cases for obs in run.reports.records])
    deaths = np.array([obs.cum_deaths for obs in run.reports.records])
    assert np.mean(deaths < cases) > 0.5


def test_fraction_space_reports_are_log_normal_too(truth):
    x0, theta = truth
    # sigma_log = 0.1 / count: a few hundredths for deaths, far less for cases
    link = ObservationLink(sigma_I=1e-7, sigma_D=1e-7, sigma_space=SigmaSpace.FRACTION)
    run = simulate(theta, x0, 60, None, link, seed=3)
    days = [obs.day_index for obs in run.reports.records]
    counts = np.array([[obs.cum_cases, obs.cum_deaths] for obs in run.reports.records], dtype=float)
    mu = predicted_log_means(run.latent[days], link)
    np.testing.assert_allclose(np.log(counts), mu, atol=0.25)


def test_recovery_of_exact_truth_is_perfect(truth, log_link):
    x0, theta = truth
    run = simulate(theta, x0, 30, None, log_link, seed=6)
    metrics = recovery_report(theta, run.latent, _summary_from_truth(run, theta))
    assert all(err == pytest.approx(0.0) for err in metrics.relative_errors.values())
    assert metrics.r0_rmse == pytest.approx(0.0)
    assert all(metrics.covered.values())
    assert metrics.passed


def test_recovery_flags_poor_estimates(truth, log_link):
    x0, theta = truth
    run = simulate(theta, x0, 30, None, log_link, seed=6)
    metrics = recovery_report(theta, run.latent, _summary_from_truth(run, theta, spread=1.0))
    assert metrics.relative_errors["beta"] == pytest.approx(1.0)
    assert not metrics.params_recovered
    assert not metrics.r0_recovered


def test_recovery_rejects_mismatched_days(truth, log_link):
    x0, theta = truth
    run = simulate(theta, x0, 30, None, log_link, seed=6)
    with pytest.raises(SummaryError):
        recovery_report(theta, run.latent[:10], _summary_from_truth(run, theta))


@pytest.fixture(scope="module")
def recovery_config():
    return load_run_config(RECOVERY_CONFIG)


def test_recovery_config_widens_the_kernel(recovery_config):
    assert recovery_config.filter.num_particles == 2000
    assert recovery_config.filter.shrinkage == "conventional"
    assert recovery_config.observation.sigma_space == SigmaSpace.LOG
    assert recovery_config.priors == PriorSpec()


@pytest.mark.slow
def test_filter_recovers_prior_mean_outbreak(truth, recovery_config):
    x0, theta = truth
    link = recovery_config.observation
    run = simulate(theta, x0, 120, None, link, seed=12)
    config = recovery_config.filter.model_copy(update={"seed": 12})
    result = run_filter(run.reports, recovery_config.priors, link, config)
    assert all(s.is_normalized(1e-10) for s in result.snapshots)
    assert all(1.0 <= d.ess <= 2000 for d in result.diagnostics)
    metrics = recovery_report(theta, run.latent, result.summary)
    assert metrics.relative_errors["beta"] <= 0.25
    assert metrics.relative_errors["gamma"] <= 0.25
    assert metrics.r0_rmse <= 0.3


@pytest.mark.slow
def test_credible_intervals_cover_truth_in_most_replicates(truth, recovery_config):
    x0, theta = truth
    link = recovery_config.observation
    covered = 0
    for seed in range(10):
        run = simulate(theta, x0, 120, None, link, seed=100 + seed)
        config = recovery_config.filter.model_copy(update={"seed": seed})
        result = run_filter(run.reports, recovery_config.priors, link, config)
        metrics = recovery_report(theta, run.latent, result.summary)
        covered += all(metrics.covered.values())
    assert covered >= 7
