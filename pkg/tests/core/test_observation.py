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

import math
from datetime import date, timedelta

import numpy as np
import pytest

from seirkdpf.core.model import CompartmentState
from seirkdpf.core.observation import (
    LinkMode,
    Observation,
    ObservationLink,
    SigmaSpace,
    calibrate_link,
    effective_sigmas,
    log_likelihood,
    log_likelihoods,
    predicted_log_mean,
)
from seirkdpf.errors import CalibrationError, DomainError


@pytest.fixture
def link():
    return ObservationLink()


def _obs(cases, deaths, day=0):
    return Observation(date(2014, 3, 23) + timedelta(days=day), day, cases, deaths)


def _normal_logpdf(y, mu, sigma):
    return -0.5 * math.log(2 * math.pi) - math.log(sigma) - 0.5 * ((y - mu) / sigma) ** 2


def test_predicted_log_mean_log_log(link):
    x = CompartmentState(0.38, 1e-4, 6e-5, 4e-5, 3e-5)
    mu = predicted_log_mean(x, link)
    assert mu[0] == pytest.approx(math.log(0.88) + 0.88 * math.log(100.0), rel=1e-12)
    assert mu[1] == pytest.approx(math.log(0.54) + 0.68 * math.log(30.0), rel=1e-12)


def test_predicted_log_mean_floors_empty_compartments(link):
    mu = predicted_log_mean(CompartmentState(0.38, 0.0, 0.0, 0.0, 0.0), link)
    assert mu[0] == pytest.approx(math.log(0.88) + 0.88 * math.log(0.5))
    assert np.all(np.isfinite(mu))


def test_predicted_log_mean_literal_mode():
    link = ObservationLink(mode=LinkMode.LITERAL)
    mu = predicted_log_mean(CompartmentState(0.38, 0.0, 0.25, 0.0, 0.04), link)
    assert mu[0] == pytest.approx(0.88 * 0.25**0.88)
    assert mu[1] == pytest.approx(0.54 * 0.04**0.68)


def test_effective_sigmas_by_space(link):
    assert link.sigma_space == SigmaSpace.SCALED
    assert effective_sigmas(link, 1000, 500) == pytest.approx((1.25, 0.85))
    assert effective_sigmas(link, 49, 29) == pytest.approx((1.25, 0.85))
    log_space = link.model_copy(update={"sigma_space": SigmaSpace.LOG})
    assert effective_sigmas(log_space, 1000, 500) == (0.00125, 0.00085)
    fraction = link.model_copy(update={"sigma_space": SigmaSpace.FRACTION})
    assert effective_sigmas(fraction, 1000, 500) == pytest.approx((1.25, 1.7))


def test_effective_sigmas_vectorised_over_counts():
    fraction = ObservationLink(sigma_space=SigmaSpace.FRACTION)
    sigma_i, sigma_d = effective_sigmas(fraction, np.array([1000.0, 250.0]), np.array([500.0, 0.0]))
    np.testing.assert_allclose(sigma_i, [1.25, 5.0])
    np.testing.assert_allclose(sigma_d, [1.7, 1700.0])


def test_default_link_separates_close_and_distant_particles(link):
    # one particle predicts the report, the other predicts ten times fewer cases
    obs = _obs(60, 20)
    close = CompartmentState(0.38, 1e-4, 6e-5, 4e-5, 3e-5)
    mu = predicted_log_mean(close, link)
    matched = _obs(round(math.exp(mu[0])), round(math.exp(mu[1])))
    far = CompartmentState(0.38, 1e-4, 6e-6, 4e-6, 3e-5)
    gap = log_likelihood(close, link, matched) - log_likelihood(far, link, matched)
    assert gap > 1.0
    assert math.isfinite(log_likelihood(far, link, obs))


def test_log_likelihood_matches_independent_normals():
    link = ObservationLink(sigma_I=0.1, sigma_D=0.2, sigma_space=SigmaSpace.LOG)
    x = CompartmentState(0.38, 1e-4, 6e-5, 4e-5, 3e-5)
    obs = _obs(80, 12)
    mu = predicted_log_mean(x, link)
    expected = _normal_logpdf(math.log(80), mu[0], 0.1) + _normal_logpdf(math.log(12), mu[1], 0.2)
    assert log_likelihood(x, link, obs) == pytest.approx(expected, rel=1e-12)


def test_log_likelihoods_vectorised_over_particles(link):
    states = np.array([[0.38, 1e-4, 6e-5, 4e-5, 3e-5], [0.37, 2e-4, 1e-4, 8e-5, 5e-5]])
    obs = _obs(300, 100)
    batch = log_likelihoods(states, link, obs)
    singles = [log_likelihood(CompartmentState.from_array(s), link, obs) for s in states]
    np.testing.assert_allclose(batch, singles, rtol=1e-12)


@pytest.mark.parametrize("cases,deaths", [(0, 0), (10, 0)])
def test_log_likelihood_rejects_nonpositive_counts(link, cases, deaths):
    with pytest.raises(DomainError):
        log_likelihood(CompartmentState(0.38, 1e-4, 6e-5, 4e-5, 3e-5), link, _obs(cases, deaths))


def test_observation_link_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ObservationLink(b_X=1.0)


def _calibration_pairs(b_i, zeta_i, b_d, zeta_d, population=1_000_000):
    observations, latent = [], []
    for k, infected in enumerate(np.geomspace(1e-2, 5e-1, 12)):
        dead = 0.4 * infected
        x = CompartmentState(0.3, 0.0, infected / 2, infected / 2, dead)
        cases = round(b_i * (population * infected) ** zeta_i)
        deaths = round(b_d * (population * dead) ** zeta_d)
        observations.append(_obs(cases, deaths, day=k))
        latent.append(x)
    return observations, latent


def test_calibrate_link_recovers_power_law():
    observations, latent = _calibration_pairs(0.88, 0.88, 0.54, 0.68)
    link = calibrate_link(observations, latent)
    assert link.b_I == pytest.approx(0.88, rel=5e-2)
    assert link.zeta_I == pytest.approx(0.88, rel=1e-2)
    assert link.b_D == pytest.approx(0.54, rel=5e-2)
    assert link.zeta_D == pytest.approx(0.68, rel=1e-2)
    assert link.mode == LinkMode.LOG_LOG
    assert link.sigma_space == SigmaSpace.LOG
    assert 0 < link.sigma_I < 0.01


def test_calibrate_link_rejects_constant_latent():
    x = CompartmentState(0.3, 0.0, 1e-3, 1e-3, 1e-3)
    observations = [_obs(100 + k, 10 + k, day=k) for k in range(5)]
    with pytest.raises(CalibrationError):
        calibrate_link(observations, [x] * 5)


def test_calibrate_link_rejects_negative_exponent():
    observations, latent = _calibration_pairs(0.88, 0.88, 0.54, 0.68)
    with pytest.raises(CalibrationError):
        calibrate_link(list(reversed(observations)), latent)


def test_calibrate_link_needs_three_pairs():
    observations, latent = _calibration_pairs(0.88, 0.88, 0.54, 0.68)
    with pytest.raises(CalibrationError):
        calibrate_link(observations[:2], latent[:2])
