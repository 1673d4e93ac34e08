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
Synthetic outbreaks drawn from the same stochastic model and observation law
the filter assumes, used as a ground truth for recovery checks.
"""
import pathlib
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Sequence

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel

from seirkdpf.core.model import (
    PARAM_NAMES,
    STATE_NAMES,
    CompartmentState,
    ParamVector,
    drift,
    r0_values,
    sample_state_array,
)
from seirkdpf.core.observation import ObservationLink, effective_sigmas, predicted_log_means
from seirkdpf.core.sampling import DEFAULT_TRUNCATION_CAP, OMEGA, PhiloxStreams, Purpose, StreamFactory
from seirkdpf.core.summary import TrajectorySummary, quantile_column
from seirkdpf.data_sources.reports import ReportDataset, dataset_from_rows, write_report_csv
from seirkdpf.errors import DataValidationError, DomainError, SummaryError
from seirkdpf.logging_setup import get_logger

logger = get_logger("simulator")

DEFAULT_EPOCH = date(2014, 3, 23)
MAX_REPORT_GAP = 7


@dataclass(frozen=True)
class SyntheticRun:
    true_params: ParamVector
    latent: np.ndarray
    reports: ReportDataset
    seed: int
    population: int = 1_000_000

    @property
    def horizon(self) -> int:
        return self.latent.shape[0] - 1

    def true_r0(self) -> np.ndarray:
        params = np.broadcast_to(self.true_params.as_array(), self.latent.shape)
        return r0_values(self.latent, params)


def default_report_days(horizon_days: int, streams: StreamFactory | int) -> list[int]:
    """Day 0 followed by gaps drawn uniformly from 1..7, stopping at the horizon."""
    if isinstance(streams, int):
        streams = PhiloxStreams(streams)
    rng = streams.stream(Purpose.CALENDAR, 0)
    days = [0]
    while True:
        nxt = days[-1] + int(rng.integers(1, MAX_REPORT_GAP + 1))
        if nxt > horizon_days:
            return days
        days.append(nxt)


def _check_report_days(report_days: Sequence[int], horizon_days: int) -> list[int]:
    days = [int(d) for d in report_days]
    if not days or days[0] != 0:
        raise DomainError("synthetic report calendars start on day 0")
    if any(b <= a for a, b in zip(days, days[1:])):
        raise DomainError("report days must be strictly increasing")
    if days[-1] > horizon_days:
        raise DomainError(f"report day {days[-1]} lies beyond the horizon {horizon_days}")
    return days


def _latent_trajectory(x0, theta, horizon_days, population, rng, process_noise, cap) -> np.ndarray:
    latent = np.empty((horizon_days + 1, len(STATE_NAMES)), dtype=float)
    latent[0] = x0
    for t in range(1, horizon_days + 1):
        if process_noise:
            latent[t], _ = sample_state_array(latent[t - 1], theta, population, rng, cap)
        else:
            step = drift(latent[t - 1], theta)
            latent[t] = step if OMEGA.contains(step) else OMEGA.project(step)
    return latent


def _reported_counts(states: np.ndarray, link: ObservationLink, rng, observation_noise: bool) -> np.ndarray:
    """
    Integer (cases, deaths) per report day, floored at 1 and forced cumulative.
    Log counts are normal around the link mean with the likelihood's log-scale
    sigma, evaluated at the latent mean count.
    """
    log_mean = predicted_log_means(states, link)
    if observation_noise:
        latent = np.exp(log_mean)
        sigma_i, sigma_d = effective_sigmas(link, latent[:, 0], latent[:, 1])
        sigma = np.column_stack([np.broadcast_to(sigma_i, latent.shape[:1]), np.broadcast_to(sigma_d, latent.shape[:1])])
        log_mean = log_mean + sigma * rng.standard_normal(log_mean.shape)
    counts = np.maximum(np.rint(np.exp(log_mean)), 1.0)
    counts = np.maximum.accumulate(counts, axis=0)
    counts[:, 1] = np.minimum(counts[:, 1], counts[:, 0])
    return counts.astype(np.int64)


def simulate(
    true_params: ParamVector,
    x0: CompartmentState,
    horizon_days: int,
    report_days: Sequence[int] | None,
    link: ObservationLink,
    seed: int = 0,
    *,
    process_noise: bool = True,
    observation_noise: bool = True,
    epoch: date = DEFAULT_EPOCH,
    streams: StreamFactory | None = None,
    cap: int = DEFAULT_TRUNCATION_CAP,
) -> SyntheticRun:
    """
    Draws a daily latent trajectory over [0, horizon_days] and cumulative reports on
    `report_days` (default: a seeded irregular weekly calendar).
    """
    if horizon_days < 0:
        raise DomainError(f"horizon must be >= 0 days, got {horizon_days}")
    x = x0.as_array()
    if not OMEGA.contains(x):
        raise DomainError(f"initial state {x0} lies outside the admissible region")
    theta = true_params.as_array()
    streams = streams or PhiloxStreams(seed)
    if report_days is None:
        report_days = default_report_days(horizon_days, streams)
    days = _check_report_days(report_days, horizon_days)

    latent = _latent_trajectory(
        x, theta, horizon_days, link.population, streams.stream(Purpose.SIMULATE, 0), process_noise, cap
    )
    counts = _reported_counts(latent[days], link, streams.stream(Purpose.SIMULATE, 1), observation_noise)
    rows = [(epoch + timedelta(days=d), int(c), int(dd)) for d, (c, dd) in zip(days, counts)]
    reports = dataset_from_rows(rows)
    logger.info(
        f"Simulated {horizon_days} days with {len(days)} reports; final counts "
        f"{reports.records[-1].cum_cases} cases, {reports.records[-1].cum_deaths} deaths."
    )
    return SyntheticRun(true_params=true_params, latent=latent, reports=reports, seed=seed, population=link.population)


def write_synthetic_run(run: SyntheticRun, out_dir: str | pathlib.Path) -> dict[str, pathlib.Path]:
    """Writes reports.csv, latent_trajectory.csv and truth.json into `out_dir`."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "reports": write_report_csv(run.reports, out_dir / "reports.csv"),
        "latent": out_dir / "latent_trajectory.csv",
        "truth": out_dir / "truth.json",
    }
    latent = pd.DataFrame(run.latent, columns=list(STATE_NAMES))
    latent.insert(0, "day_index", np.arange(run.latent.shape[0]))
    latent.to_csv(paths["latent"], index=False, lineterminator="\n")
    truth = {
        "seed": run.seed,
        "population": run.population,
        "horizon_days": run.horizon,
        "epoch": run.reports.epoch.isoformat(),
        "params": run.true_params.as_dict(),
        "x0": dict(zip(STATE_NAMES, run.latent[0].tolist())),
    }
    paths["truth"].write_bytes(orjson.dumps(truth, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    return paths


def read_latent_trajectory(path: str | pathlib.Path) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip")
    expected = ["day_index", *STATE_NAMES]
    if list(frame.columns) != expected:
        raise DataValidationError(f"{path}: expected columns {expected}, got {list(frame.columns)}")
    if not np.array_equal(frame["day_index"].to_numpy(), np.arange(len(frame))):
        raise DataValidationError(f"{path}: day_index must run 0, 1, 2, ... without gaps")
    return frame[list(STATE_NAMES)].to_numpy(dtype=float)


def read_truth(path: str | pathlib.Path) -> tuple[ParamVector, dict]:
    try:
        truth = orjson.loads(pathlib.Path(path).read_bytes())
        params = ParamVector(*(float(truth["params"][name]) for name in PARAM_NAMES))
    except (OSError, orjson.JSONDecodeError, KeyError, TypeError) as e:
        raise DataValidationError(f"cannot read truth file {path}: {e}") from e
    return params, truth


# --- Recovery ---

RECOVERY_PARAMS = ("beta", "gamma", "lambda")
RELATIVE_ERROR_LIMIT = 0.25
R0_RMSE_LIMIT = 0.3


class RecoveryMetrics(BaseModel):
    final_day: int
    relative_errors: dict[str, float]
    r0_rmse: float
    covered: dict[str, bool]
    band: tuple[str, str]
    params_recovered: bool
    r0_recovered: bool

    @property
    def passed(self) -> bool:
        return self.params_recovered and self.r0_recovered


def recovery_report(
    true_params: ParamVector,
    latent: np.ndarray,
    summary: TrajectorySummary,
) -> RecoveryMetrics:
    """
    Scores a filter run against the synthetic truth: relative error of the final-day
    posterior means, RMSE of the posterior-mean R0 against c*beta/gamma on report days,
    and whether the outermost quantile band covers each true parameter on the final day.
    """
    observed = summary.frame[summary.frame["observed"]]
    days = sorted(observed["day_index"].unique().tolist())
    if not days:
        raise SummaryError("filter output has no observed days to score")
    if days[-1] >= latent.shape[0]:
        raise SummaryError(f"filter output reaches day {days[-1]} but the synthetic run ends on day {latent.shape[0] - 1}")
    if len(summary.quantiles) < 2:
        raise SummaryError("recovery needs a lower and an upper quantile band")

    truth = true_params.as_dict()
    final = days[-1]
    relative_errors = {
        name: abs(summary.value(final, name) - truth[name]) / abs(truth[name])
        for name in PARAM_NAMES
        if truth[name] != 0.0
    }
    true_r0 = r0_values(latent[days], np.broadcast_to(true_params.as_array(), (len(days), 5)))
    mean_r0 = np.array([summary.value(d, "R0") for d in days])
    r0_rmse = float(np.sqrt(np.mean((mean_r0 - true_r0) ** 2)))

    band = (quantile_column(min(summary.quantiles)), quantile_column(max(summary.quantiles)))
    covered = {
        name: summary.value(final, name, band[0]) <= truth[name] <= summary.value(final, name, band[1])
        for name in RECOVERY_PARAMS
    }
    metrics = RecoveryMetrics(
        final_day=final,
        relative_errors=relative_errors,
        r0_rmse=r0_rmse,
        covered=covered,
        band=band,
        params_recovered=all(relative_errors[name] <= RELATIVE_ERROR_LIMIT for name in ("beta", "gamma")),
        r0_recovered=r0_rmse <= R0_RMSE_LIMIT,
    )
    logger.info(
        f"Recovery on day {final}: beta err {relative_errors['beta']:.3f}, gamma err "
        f"{relative_errors['gamma']:.3f}, R0 RMSE {r0_rmse:.3f}."
    )
    return metrics
