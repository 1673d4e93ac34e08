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

"""
Log-normal observation model for cumulative case and death reports.

The log of each reported count is normal around a power law of the latent
count: in "log-log" mode the mean is log b + zeta * log(P * fraction), with
latent cases P * (I + R) and latent deaths P * D. "literal" mode keeps the
raw b * fraction ** zeta form for comparison experiments.

Sigma can be read three ways:

    log       standard deviation of the log counts as given
    scaled    sigma * sqrt(P): sigma shrinks like 1 / sqrt(P), so the configured
              values are log-scale deviations per sqrt of population (default)
    fraction  standard deviation of the reported population fraction, mapped
              to the log scale by the delta method sigma * P / count

With P = 1e6 the default constants give 1.25 and 0.85 on the log scale.
"""
import math
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from seirkdpf.core.model import CompartmentState, D, I, R
from seirkdpf.errors import CalibrationError, DomainError

LATENT_COUNT_FLOOR = 0.5
SIGMA_FLOOR = 1e-9


class LinkMode(str, Enum):
    LOG_LOG = "log-log"
    LITERAL = "literal"


class SigmaSpace(str, Enum):
    LOG = "log"
    SCALED = "scaled"
    FRACTION = "fraction"


class ObservationLink(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    b_I: float = Field(0.88, gt=0, allow_inf_nan=False)
    b_D: float = Field(0.54, gt=0, allow_inf_nan=False)
    zeta_I: float = Field(0.88, gt=0, allow_inf_nan=False)
    zeta_D: float = Field(0.68, gt=0, allow_inf_nan=False)
    sigma_I: float = Field(0.00125, gt=0, allow_inf_nan=False)
    sigma_D: float = Field(0.00085, gt=0, allow_inf_nan=False)
    population: int = Field(1_000_000, ge=1)
    mode: LinkMode = LinkMode.LOG_LOG
    sigma_space: SigmaSpace = SigmaSpace.SCALED


@dataclass(frozen=True)
class Observation:
    date: date
    day_index: int
    cum_cases: int
    cum_deaths: int


# --- Mean of the log-observations ---

def predicted_log_means(states: np.ndarray, link: ObservationLink) -> np.ndarray:
    """Vectorised form: (..., 5) states -> (..., 2) means of [log cases, log deaths]."""
    infected = states[..., I] + states[..., R]
    dead = states[..., D]
    out = np.empty(states.shape[:-1] + (2,), dtype=float)
    if link.mode == LinkMode.LOG_LOG:
        p = float(link.population)
        out[..., 0] = math.log(link.b_I) + link.zeta_I * np.log(np.maximum(p * infected, LATENT_COUNT_FLOOR))
        out[..., 1] = math.log(link.b_D) + link.zeta_D * np.log(np.maximum(p * dead, LATENT_COUNT_FLOOR))
    else:
        out[..., 0] = link.b_I * np.maximum(infected, 0.0) ** link.zeta_I
        out[..., 1] = link.b_D * np.maximum(dead, 0.0) ** link.zeta_D
    return out


def predicted_log_mean(x: CompartmentState, link: ObservationLink) -> np.ndarray:
    return predicted_log_means(x.as_array(), link)


def effective_sigmas(link: ObservationLink, cases, deaths):
    """Standard deviations on the log scale for the given counts (scalars or arrays)."""
    if link.sigma_space == SigmaSpace.LOG:
        return link.sigma_I, link.sigma_D
    p = float(link.population)
    if link.sigma_space == SigmaSpace.SCALED:
        return link.sigma_I * math.sqrt(p), link.sigma_D * math.sqrt(p)
    sigma_i = link.sigma_I * p / np.maximum(cases, LATENT_COUNT_FLOOR)
    sigma_d = link.sigma_D * p / np.maximum(deaths, LATENT_COUNT_FLOOR)
    if np.ndim(sigma_i) == 0:
        return float(sigma_i), float(sigma_d)
    return sigma_i, sigma_d


def _log_counts(obs: Observation) -> np.ndarray:
    if obs.cum_cases <= 0 or obs.cum_deaths <= 0:
        raise DomainError(
            f"day {obs.day_index}: counts entering the log likelihood must be positive "
            f"(cases={obs.cum_cases}, deaths={obs.cum_deaths})"
        )
    return np.log([float(obs.cum_cases), float(obs.cum_deaths)])


# --- Likelihood ---

def log_likelihoods(states: np.ndarray, link: ObservationLink, obs: Observation) -> np.ndarray:
    """Per-particle log p(y | x) for (J, 5) states; the two channels are independent."""
    y = _log_counts(obs)
    mu = predicted_log_means(states, link)
    sigma_i, sigma_d = effective_sigmas(link, obs.cum_cases, obs.cum_deaths)
    return stats.norm.logpdf(y[0], loc=mu[..., 0], scale=sigma_i) + stats.norm.logpdf(y[1], loc=mu[..., 1], scale=sigma_d)


def log_likelihood(x: CompartmentState, link: ObservationLink, obs: Observation) -> float:
    return float(log_likelihoods(x.as_array(), link, obs))


# --- Calibration ---

def calibrate_link(
    observations: Sequence[Observation],
    latent: Sequence[CompartmentState],
    population: int = 1_000_000,
) -> ObservationLink:
    """
    Fits (log b, zeta) per channel by ordinary least squares of log(count) on
    log(latent count); sigma is the residual standard deviation. The result is a
    log-log link with sigma on the log scale.
    """
    if len(observations) != len(latent):
        raise CalibrationError(f"need paired points, got {len(observations)} observations and {len(latent)} states")
    if len(observations) < 3:
        raise CalibrationError(f"need at least 3 paired points, got {len(observations)}")
    if population < 1:
        raise CalibrationError(f"population must be positive, got {population}")

    states = np.array([x.as_array() for x in latent])
    latent_cases = np.maximum(population * (states[:, I] + states[:, R]), LATENT_COUNT_FLOOR)
    latent_deaths = np.maximum(population * states[:, D], LATENT_COUNT_FLOOR)
    cases = np.array([o.cum_cases for o in observations], dtype=float)
    deaths = np.array([o.cum_deaths for o in observations], dtype=float)
    if np.any(cases <= 0) or np.any(deaths <= 0):
        raise CalibrationError("calibration needs positive case and death counts")

    b_i, zeta_i, sigma_i = _fit_channel("cases", np.log(latent_cases), np.log(cases))
    b_d, zeta_d, sigma_d = _fit_channel("deaths", np.log(latent_deaths), np.log(deaths))
    return ObservationLink(
        b_I=b_i, b_D=b_d, zeta_I=zeta_i, zeta_D=zeta_d,
        sigma_I=sigma_i, sigma_D=sigma_d,
        population=population, mode=LinkMode.LOG_LOG, sigma_space=SigmaSpace.LOG,
    )


def _fit_channel(channel: str, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if np.ptp(x) == 0.0:
        raise CalibrationError(f"{channel}: latent counts have zero variance, regression is degenerate")
    fit = stats.linregress(x, y)
    if not fit.slope > 0:
        raise CalibrationError(f"{channel}: fitted power-law exponent {fit.slope:.4g} is not positive")
    residuals = y - (fit.intercept + fit.slope * x)
    dof = max(len(x) - 2, 1)
    sigma = max(math.sqrt(float(residuals @ residuals) / dof), SIGMA_FLOOR)
    return math.exp(fit.intercept), float(fit.slope), sigma
