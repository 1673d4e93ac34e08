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

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from seirkdpf.core.model import CompartmentState, ParamVector
from seirkdpf.errors import DomainError

WEIGHT_TOLERANCE = 1e-10


class FilterConfig(BaseModel):
    """
    Knobs of the kernel density particle filter. Defaults are the published run
    settings (J = 5000, discount 0.95, P = 1e6).
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_particles: int = Field(5000, ge=2)
    discount: float = Field(0.95, allow_inf_nan=False)
    seed: int = Field(0, ge=0, lt=2**64)
    population: int = Field(1_000_000, ge=1)
    truncation_cap: int = Field(1000, ge=1)
    resampling: Literal["multinomial", "systematic"] = "multinomial"
    shrinkage: Literal["published", "conventional"] = "published"
    param_upper_factor: float = Field(10.0, gt=0, allow_inf_nan=False)
    workers: int = Field(1, ge=1)

    @field_validator("discount")
    @classmethod
    def _discount_range(cls, value: float) -> float:
        if not 1.0 / 3.0 < value < 1.0:
            raise ValueError(f"discount must lie in (1/3, 1), got {value}")
        return value


@dataclass(frozen=True)
class Particle:
    state: CompartmentState
    params: ParamVector
    weight: float


@dataclass(frozen=True)
class ParticleEnsemble:
    """
    J weighted (state, params) pairs stored column-wise: states (J, 5), params (J, 5),
    weights (J,). Arrays are made read-only so an emitted snapshot never changes.
    """
    states: np.ndarray
    params: np.ndarray
    weights: np.ndarray
    day_index: int
    generation: int = 0

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        params = np.array(self.params, dtype=float)
        weights = np.array(self.weights, dtype=float)
        n = weights.shape[0] if weights.ndim == 1 else -1
        if n < 2 or states.shape != (n, 5) or params.shape != (n, 5):
            raise DomainError(
                f"ensemble needs J >= 2 particles with (J, 5) states and params, "
                f"got states {states.shape}, params {params.shape}, weights {weights.shape}"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise DomainError("particle weights must be finite and nonnegative")
        for arr in (states, params, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "weights", weights)

    @property
    def num_particles(self) -> int:
        return self.weights.shape[0]

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(CompartmentState.from_array(s), ParamVector.from_array(p), float(w))
            for s, p, w in zip(self.states, self.params, self.weights)
        ]

    def is_normalized(self, tol: float = WEIGHT_TOLERANCE) -> bool:
        return abs(float(self.weights.sum()) - 1.0) <= tol

    def weighted_param_mean(self) -> np.ndarray:
        return self.weights @ self.params


@dataclass(frozen=True)
class StepDiagnostics:
    day_index: int
    generation: int
    gap_days: int
    ess_prior: float
    ess: float
    log_evidence: float
    unique_ancestors: int
    state_fallbacks: int
    param_fallbacks: int
