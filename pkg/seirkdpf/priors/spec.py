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
Priors for the initial parameters and states, and the JSON run configuration.

Defaults are the published priors:

    alpha ~ U(.0059, .00593)   beta ~ U(.259, .379)   lambda ~ Beta(78, 577)
    gamma ~ Beta(21, 246)      phi_f ~ Beta(37, 15)
    c ~ U(.36, .40)            E ~ U(.000128, .000141)
    I ~ U(.000050, .000061)    R ~ U(.000042, .000058)
    D ~ U(.000029, .000030)

The alpha prior is extremely narrow; it is shipped as published.
"""
import pathlib
from typing import Annotated, Literal, Union

import numpy as np
import orjson
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from seirkdpf.core.model import CompartmentState, ParamVector
from seirkdpf.core.observation import ObservationLink
from seirkdpf.core.sampling import BoxRegion, beta_sample, uniform_sample
from seirkdpf.errors import ConfigError
from seirkdpf.filtering.state import FilterConfig
from seirkdpf.logging_setup import get_logger
from seirkdpf.priors.base import BasePrior

logger = get_logger("priors")

GAMMA_FLOOR = 1e-9


class UniformPrior(BasePrior):
    kind: Literal["uniform"] = "uniform"
    lo: float = Field(allow_inf_nan=False)
    hi: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform prior needs lo < hi, got lo={self.lo}, hi={self.hi}")
        return self

    def sample(self, rng: np.random.Generator) -> float:
        return uniform_sample(self.lo, self.hi, rng)

    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


class BetaPrior(BasePrior):
    kind: Literal["beta"] = "beta"
    shape1: float = Field(gt=0, allow_inf_nan=False)
    shape2: float = Field(gt=0, allow_inf_nan=False)

    def sample(self, rng: np.random.Generator) -> float:
        return beta_sample(self.shape1, self.shape2, rng)

    def support(self) -> tuple[float, float]:
        return 0.0, 1.0

    def mean(self) -> float:
        return self.shape1 / (self.shape1 + self.shape2)


Prior = Annotated[Union[UniformPrior, BetaPrior], Field(discriminator="kind")]


class ParamPriors(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    alpha: Prior = UniformPrior(lo=0.0059, hi=0.00593)
    beta: Prior = UniformPrior(lo=0.259, hi=0.379)
    lambda_: Prior = Field(BetaPrior(shape1=78, shape2=577), alias="lambda")
    gamma: Prior = BetaPrior(shape1=21, shape2=246)
    phi_f: Prior = BetaPrior(shape1=37, shape2=15)

    @field_validator("alpha", "beta", "lambda_", "gamma")
    @classmethod
    def _nonnegative(cls, prior: BasePrior) -> BasePrior:
        if not prior.within(0.0):
            raise ValueError(f"rate prior support {prior.support()} must lie in [0, inf)")
        return prior

    @field_validator("phi_f")
    @classmethod
    def _proportion(cls, prior: BasePrior) -> BasePrior:
        if not prior.within(0.0, 1.0):
            raise ValueError(f"fatality prior support {prior.support()} must lie in [0, 1]")
        return prior

    def ordered(self) -> tuple[BasePrior, ...]:
        return self.alpha, self.beta, self.lambda_, self.gamma, self.phi_f


class StatePriors(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    c: Prior = UniformPrior(lo=0.36, hi=0.40)
    E: Prior = UniformPrior(lo=0.000128, hi=0.000141)
    I: Prior = UniformPrior(lo=0.000050, hi=0.000061)
    R: Prior = UniformPrior(lo=0.000042, hi=0.000058)
    D: Prior = UniformPrior(lo=0.000029, hi=0.000030)

    @field_validator("c", "E", "I", "R", "D")
    @classmethod
    def _fraction(cls, prior: BasePrior) -> BasePrior:
        if not prior.within(0.0, 1.0):
            raise ValueError(f"state prior support {prior.support()} must lie in [0, 1]")
        return prior

    @model_validator(mode="after")
    def _epidemic_mass(self):
        upper = sum(p.support()[1] for p in (self.E, self.I, self.R))
        if upper > 1.0:
            raise ValueError(f"E + I + R can exceed 1 under these priors (upper bound {upper})")
        return self

    def ordered(self) -> tuple[BasePrior, ...]:
        return self.c, self.E, self.I, self.R, self.D


class PriorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    params: ParamPriors = Field(default_factory=ParamPriors)
    states: StatePriors = Field(default_factory=StatePriors)


class RunConfig(BaseModel):
    """Everything a run needs besides the data: priors, filter knobs and the observation link."""
    model_config = ConfigDict(extra="forbid")

    priors: PriorSpec = Field(default_factory=PriorSpec)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    observation: ObservationLink = Field(default_factory=ObservationLink)

    @model_validator(mode="after")
    def _shared_population(self):
        if "population" not in self.observation.model_fields_set:
            self.observation = self.observation.model_copy(update={"population": self.filter.population})
        elif self.observation.population != self.filter.population:
            raise ValueError(
                f"observation.population ({self.observation.population}) differs from "
                f"filter.population ({self.filter.population})"
            )
        return self


# --- Sampling ---

def sample_initial(priors: PriorSpec, rng: np.random.Generator) -> tuple[CompartmentState, ParamVector]:
    """One joint draw of (x0, theta0). Parameters are drawn first, then states."""
    theta = ParamVector(*(p.sample(rng) for p in priors.params.ordered()))
    x = CompartmentState(*(p.sample(rng) for p in priors.states.ordered()))
    return x, theta


def parameter_support(priors: PriorSpec, upper_factor: float = 10.0) -> BoxRegion:
    """
    Truncation box for regenerated parameters: rates in [0, upper_factor * prior upper bound],
    fatality proportion in [0, 1].
    """
    uppers = [upper_factor * p.support()[1] for p in priors.params.ordered()[:4]]
    # gamma stays strictly positive so R0 is defined for every particle
    lower = np.array([0.0, 0.0, 0.0, GAMMA_FLOOR, 0.0])
    return BoxRegion(lower=lower, upper=np.array(uppers + [1.0]))


# --- Configuration files ---

def _config_error(exc: pydantic.ValidationError) -> ConfigError:
    errors = exc.errors()
    first = errors[0]
    key = ".".join(str(part) for part in first["loc"]) or "<root>"
    details = "; ".join(
        f"{'.'.join(str(part) for part in e['loc']) or '<root>'}: {e['msg']}" for e in errors
    )
    return ConfigError(details if len(errors) > 1 else first["msg"], key=key)


def load_run_config(path: str | pathlib.Path | None = None, overrides: dict | None = None) -> RunConfig:
    """
    Reads and validates a JSON run configuration. Missing keys take the published
    defaults; unknown keys are rejected. `overrides` is a nested dict merged on top
    of the file (used for CLI flags).
    """
    raw: dict = {}
    if path is not None:
        path = pathlib.Path(path)
        try:
            content = path.read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if content.strip():
            try:
                raw = orjson.loads(content)
            except orjson.JSONDecodeError as e:
                raise ConfigError(f"malformed JSON in {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config root in {path} must be a JSON object")
    if overrides:
        raw = _merge(raw, overrides)
    try:
        config = RunConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        raise _config_error(e) from e
    logger.debug(f"Loaded run configuration from {path or 'defaults'}.")
    return config


def parse_config(path: str | pathlib.Path | None) -> tuple[PriorSpec, FilterConfig, ObservationLink]:
    config = load_run_config(path)
    return config.priors, config.filter, config.observation


def dump_config(config: RunConfig) -> str:
    """Canonical JSON for a run configuration; load_run_config(dump) reproduces it."""
    data = config.model_dump(mode="json", by_alias=True)
    return orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS).decode()


def _merge(base: dict, updates: dict) -> dict:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def prior_means(priors: PriorSpec) -> tuple[CompartmentState, ParamVector]:
    """Analytic prior means, used as a reference truth for synthetic runs."""
    return (
        CompartmentState(*(p.mean() for p in priors.states.ordered())),
        ParamVector(*(p.mean() for p in priors.params.ordered())),
    )


