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
Kernel density particle filter over an irregular reporting calendar.

Each report day runs one generation of the auxiliary kernel filter:

    1. shrink each particle's parameters towards the weighted mean, m_j
    2. push each state through the noise-free model for the gap, mu_j
    3. auxiliary weights g_j ~ w_j p(y | mu_j), normalized
    4. resample ancestor indices by g
    5. regenerate parameters from N(m_anc, V) truncated to the parameter box
    6. propagate states stochastically over the gap under the new parameters
    7./8. final weights ~ p(y | x) / p(y | mu_anc), normalized

All weight algebra happens in log space with max subtraction. Per-particle work
draws from its own stream keyed by (generation, particle index), so results do
not depend on the number of worker threads.
"""
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.special import logsumexp
from tqdm import tqdm

from seirkdpf.core.model import deterministic_gap, propagate_path
from seirkdpf.core.observation import Observation, ObservationLink, log_likelihoods
from seirkdpf.core.sampling import (
    BoxRegion,
    PhiloxStreams,
    Purpose,
    StreamFactory,
    covariance_factor,
    truncated_normal_sample,
)
from seirkdpf.core.summary import DEFAULT_QUANTILES, SummaryBuilder, TrajectorySummary
from seirkdpf.errors import DomainError, FilterDegeneracyError
from seirkdpf.filtering.state import FilterConfig, ParticleEnsemble, StepDiagnostics
from seirkdpf.logging_setup import get_logger
from seirkdpf.priors.spec import PriorSpec, parameter_support, sample_initial

logger = get_logger("kdpf")

Pairing = Literal["published", "conventional"]


# --- Kernel shrinkage ---

def shrinkage_coefficients(phi_d: float, pairing: Pairing = "published") -> tuple[float, float]:
    """
    Returns (a, h) for discount factor phi_d in (1/3, 1).

    published:    h = 1 - ((3 phi - 1) / (2 phi))^2,  a = 1 - h^2
    conventional: a = (3 phi - 1) / (2 phi),          h = sqrt(1 - a^2)
    """
    if not (1.0 / 3.0 < phi_d < 1.0):
        raise DomainError(f"discount factor must lie in (1/3, 1), got {phi_d}")
    ratio = (3.0 * phi_d - 1.0) / (2.0 * phi_d)
    if pairing == "published":
        h = 1.0 - ratio**2
        return 1.0 - h**2, h
    if pairing == "conventional":
        return ratio, math.sqrt(1.0 - ratio**2)
    raise DomainError(f"unknown shrinkage pairing {pairing!r}")


def shrink_means(params: np.ndarray, weighted_mean: np.ndarray, a: float) -> np.ndarray:
    """m = a * theta + (1 - a) * theta_bar, row-wise for (J, 5) or a single vector."""
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"shrinkage coefficient a must lie in [0, 1], got {a}")
    return a * np.asarray(params, dtype=float) + (1.0 - a) * np.asarray(weighted_mean, dtype=float)


def weighted_covariance(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Population-weighted covariance (no small-sample correction) of the rows of `values`."""
    centered = values - weights @ values
    return (centered * weights[:, None]).T @ centered


def kernel_covariance(ensemble: ParticleEnsemble, h: float) -> np.ndarray:
    cov = h**2 * weighted_covariance(ensemble.params, ensemble.weights)
    if not np.any(cov):
        logger.warning(
            f"Parameter kernel covariance is zero on day {ensemble.day_index}; "
            f"regenerated parameters collapse onto the shrunk means."
        )
    return cov


# --- Weights and resampling ---

def effective_sample_size(weights) -> float:
    """1 / sum(w^2), clipped to [1, J]; the raw ratio can overshoot J by rounding."""
    w = weights.weights if isinstance(weights, ParticleEnsemble) else np.asarray(weights, dtype=float)
    return float(np.clip(1.0 / np.sum(w**2), 1.0, w.shape[0]))


def normalize_log_weights(log_weights: np.ndarray, day_index: int) -> tuple[np.ndarray, float]:
    """Returns normalized weights and log of the unnormalized total."""
    if not np.any(np.isfinite(log_weights)):
        raise FilterDegeneracyError(day_index)
    log_total = float(logsumexp(log_weights))
    weights = np.exp(log_weights - log_total)
    return weights / weights.sum(), log_total


def resample(weights: np.ndarray, rng: np.random.Generator, scheme: str = "multinomial") -> np.ndarray:
    """Ancestor indices drawn in proportion to `weights`."""
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    if scheme == "multinomial":
        u = np.asarray(rng.random(n), dtype=float)
    elif scheme == "systematic":
        u = (np.arange(n) + float(rng.random())) / n
    else:
        raise DomainError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cumulative, u, side="right"), n - 1)


# --- One generation ---

@dataclass(frozen=True)
class StepOutcome:
    ensemble: ParticleEnsemble
    diagnostics: StepDiagnostics
    paths: np.ndarray
    aux_weights: np.ndarray
    ancestors: np.ndarray


@dataclass(frozen=True)
class _ParticleTask:
    index: int
    generation: int
    state: np.ndarray
    mean: np.ndarray


class KernelDensityFilter:
    """
    Runs generations of the filter for one configuration. The executor, when
    given, is only used for the embarrassingly parallel per-particle work.
    """

    def __init__(
        self,
        config: FilterConfig,
        link: ObservationLink,
        param_region: BoxRegion,
        streams: StreamFactory | None = None,
        executor: Executor | None = None,
    ):
        self.config = config
        self.link = link
        self.param_region = param_region
        self.streams = streams or PhiloxStreams(config.seed)
        self.executor = executor
        self.a, self.h = shrinkage_coefficients(config.discount, config.shrinkage)

    def _map(self, fn, items: list):
        if self.executor is None:
            return [fn(item) for item in items]
        return list(self.executor.map(fn, items))

    def initialize(self, priors, day_index: int = 0) -> ParticleEnsemble:
        def draw(i: int):
            x0, theta0 = sample_initial(priors, self.streams.stream(Purpose.INIT, 0, i))
            return x0.as_array(), theta0.as_array()

        draws = self._map(draw, list(range(self.config.num_particles)))
        j = self.config.num_particles
        return ParticleEnsemble(
            states=np.array([d[0] for d in draws]),
            params=np.array([d[1] for d in draws]),
            weights=np.full(j, 1.0 / j),
            day_index=day_index,
            generation=0,
        )

    def _regenerate(self, task: _ParticleTask, factor: np.ndarray, gap_days: int):
        rng = self.streams.stream(Purpose.PARTICLE, task.generation, task.index)
        theta = truncated_normal_sample(
            task.mean, None, self.param_region, rng, self.config.truncation_cap, factor=factor
        )
        path, fallbacks = propagate_path(
            task.state, theta.value, gap_days, self.config.population, rng, self.config.truncation_cap
        )
        return theta.value, path, theta.projected, fallbacks

    def step(self, ensemble: ParticleEnsemble, obs: Observation, gap_days: int) -> StepOutcome:
        if gap_days < 0 or obs.day_index != ensemble.day_index + gap_days:
            raise DomainError(
                f"observation on day {obs.day_index} does not follow the ensemble on day "
                f"{ensemble.day_index} by {gap_days} days"
            )
        if gap_days == 0 and ensemble.generation != 0:
            raise DomainError(f"day {obs.day_index}: only the first report may arrive with a zero gap")
        generation = ensemble.generation + 1
        j = ensemble.num_particles

        # 1. shrinkage
        theta_bar = ensemble.weighted_param_mean()
        means = shrink_means(ensemble.params, theta_bar, self.a)
        factor = covariance_factor(kernel_covariance(ensemble, self.h))

        # 2.-3. auxiliary weights from the noise-free look-ahead
        mu = deterministic_gap(ensemble.states, means, gap_days)
        ll_aux = log_likelihoods(mu, self.link, obs)
        with np.errstate(divide="ignore"):
            log_prior_w = np.log(ensemble.weights)
        log_g = log_prior_w + ll_aux
        aux_weights, log_aux_total = normalize_log_weights(log_g, obs.day_index)

        # 4. ancestors
        ancestors = resample(aux_weights, self.streams.stream(Purpose.RESAMPLE, generation), self.config.resampling)

        # 5.-6. regenerate parameters and propagate states
        tasks = [_ParticleTask(i, generation, ensemble.states[k], means[k]) for i, k in enumerate(ancestors)]
        results = self._map(lambda t: self._regenerate(t, factor, gap_days), tasks)
        params = np.array([r[0] for r in results])
        paths = np.array([r[1] for r in results]).reshape(j, gap_days, 5)
        states = paths[:, -1, :] if gap_days > 0 else ensemble.states[ancestors].copy()

        # 7.-8. correct for the look-ahead
        log_w = log_likelihoods(states, self.link, obs) - ll_aux[ancestors]
        log_w = np.where(np.isnan(log_w), -np.inf, log_w)
        weights, log_final_total = normalize_log_weights(log_w, obs.day_index)

        diagnostics = StepDiagnostics(
            day_index=obs.day_index,
            generation=generation,
            gap_days=gap_days,
            ess_prior=effective_sample_size(aux_weights),
            ess=effective_sample_size(weights),
            log_evidence=log_aux_total + log_final_total - math.log(j),
            unique_ancestors=int(np.unique(ancestors).size),
            state_fallbacks=int(sum(r[3] for r in results)),
            param_fallbacks=int(sum(r[2] for r in results)),
        )
        if diagnostics.state_fallbacks or diagnostics.param_fallbacks:
            logger.warning(
                f"Truncation cap of {self.config.truncation_cap} exhausted on day {obs.day_index}: projected "
                f"{diagnostics.state_fallbacks} state and {diagnostics.param_fallbacks} parameter draws."
            )
        if diagnostics.ess < 0.01 * j:
            logger.warning(f"Effective sample size fell to {diagnostics.ess:.1f} of {j} on day {obs.day_index}.")
        logger.debug(
            f"Day {obs.day_index}: ess {diagnostics.ess_prior:.1f} -> {diagnostics.ess:.1f}, "
            f"{diagnostics.unique_ancestors} ancestors, log evidence {diagnostics.log_evidence:.3f}"
        )
        new = ParticleEnsemble(states=states, params=params, weights=weights, day_index=obs.day_index, generation=generation)
        return StepOutcome(new, diagnostics, paths, aux_weights, ancestors)


def filter_step(
    ensemble: ParticleEnsemble,
    obs: Observation,
    gap_days: int,
    link: ObservationLink,
    config: FilterConfig,
    streams: StreamFactory | None = None,
    *,
    param_region: BoxRegion | None = None,
    executor: Executor | None = None,
) -> ParticleEnsemble:
    """One generation of the filter. Without `param_region` the parameters are confined to the default prior box."""
    if param_region is None:
        param_region = parameter_support(PriorSpec(), config.param_upper_factor)
    return KernelDensityFilter(config, link, param_region, streams, executor).step(ensemble, obs, gap_days).ensemble


# --- Full run ---

@dataclass
class FilterResult:
    snapshots: list[ParticleEnsemble]
    summary: TrajectorySummary
    diagnostics: list[StepDiagnostics]
    epoch: date | None = None
    extra: dict = field(default_factory=dict)

    @property
    def log_evidence(self) -> float:
        return float(sum(d.log_evidence for d in self.diagnostics))


def _records(observations) -> tuple[list[Observation], date | None]:
    records = list(getattr(observations, "records", observations))
    epoch = getattr(observations, "epoch", records[0].date if records else None)
    return records, epoch


def run_filter(
    observations: Iterable[Observation],
    priors,
    link: ObservationLink,
    config: FilterConfig,
    *,
    streams: StreamFactory | None = None,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    progress: bool = False,
    keep_snapshots: bool = True,
) -> FilterResult:
    """
    Initializes J particles from the priors on the first report day and runs one
    generation per report. Days between reports are summarized from the propagated
    paths with equal weights and flagged observed=False.
    """
    records, epoch = _records(observations)
    if not records:
        raise DomainError("run_filter needs at least one observation")
    for previous, current in zip(records, records[1:]):
        if current.day_index <= previous.day_index:
            raise DomainError(f"observations must be strictly increasing in day, got {previous.day_index} then {current.day_index}")

    region = parameter_support(priors, config.param_upper_factor)
    builder = SummaryBuilder(quantiles=tuple(quantiles), population=config.population, epoch=epoch)
    snapshots: list[ParticleEnsemble] = []
    diagnostics: list[StepDiagnostics] = []
    uniform = np.full(config.num_particles, 1.0 / config.num_particles)

    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else nullcontext()
    with pool as executor:
        kdpf = KernelDensityFilter(config, link, region, streams, executor)
        ensemble = kdpf.initialize(priors, day_index=records[0].day_index)
        logger.info(
            f"Running {len(records)} reports with J={config.num_particles}, discount={config.discount}, "
            f"a={kdpf.a:.6f}, h={kdpf.h:.6f}, workers={config.workers}."
        )
        for obs in tqdm(records, desc="Filtering", unit="report", disable=not progress):
            gap = obs.day_index - ensemble.day_index
            outcome = kdpf.step(ensemble, obs, gap)
            for offset in range(gap - 1):
                day = ensemble.day_index + offset + 1
                builder.add_arrays(outcome.paths[:, offset, :], outcome.ensemble.params, uniform, day, observed=False)
            ensemble = outcome.ensemble
            builder.add_ensemble(ensemble, observed=True)
            diagnostics.append(outcome.diagnostics)
            if keep_snapshots:
                snapshots.append(ensemble)

    result = FilterResult(snapshots=snapshots, summary=builder.build(), diagnostics=diagnostics, epoch=epoch)
    logger.info(f"Filter finished on day {ensemble.day_index}; total log evidence {result.log_evidence:.3f}.")
    return result
