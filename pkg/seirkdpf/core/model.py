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
Discrete-time stochastic SEIR model with a decaying mixing factor.

State x = [c, E, I, R, D] as population fractions (S ~ 1 is not tracked),
parameters theta = [alpha, beta, lambda, gamma, phi_f]. One step is one day:

    c' = c - alpha c
    E' = E + beta c I - lambda E
    I' = I + lambda E - gamma I
    R' = R + gamma I
    D' = phi_f R + phi_f gamma I

Daily noise enters through independent terms xi_alpha, xi_beta, xi_lambda,
xi_gamma with variance rate/P^2, giving the covariance Q(theta) below.
"""
from dataclasses import astuple, dataclass

import numpy as np

from seirkdpf.core.sampling import DEFAULT_TRUNCATION_CAP, OMEGA, truncated_normal_sample
from seirkdpf.errors import DomainError

STATE_NAMES = ("c", "E", "I", "R", "D")
PARAM_NAMES = ("alpha", "beta", "lambda", "gamma", "phi_f")

C, E, I, R, D = range(5)
ALPHA, BETA, LAMBDA, GAMMA, PHI = range(5)


@dataclass(frozen=True)
class CompartmentState:
    c: float
    E: float
    I: float
    R: float
    D: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "CompartmentState":
        return cls(*(float(v) for v in values))

    def is_admissible(self) -> bool:
        """True when the state lies in the truncation region (all >= 0, c <= 1, E+I+R <= 1)."""
        return OMEGA.contains(self.as_array())


@dataclass(frozen=True)
class ParamVector:
    alpha: float
    beta: float
    lambda_: float
    gamma: float
    phi_f: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ParamVector":
        return cls(*(float(v) for v in values))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, astuple(self)))

    def is_admissible(self) -> bool:
        values = self.as_array()
        return bool(np.all(np.isfinite(values)) and np.all(values >= 0.0) and values[PHI] <= 1.0)


@dataclass(frozen=True)
class ProcessCovariance:
    q: np.ndarray

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.q).min())


def _as_state_array(x) -> np.ndarray:
    arr = x.as_array() if isinstance(x, CompartmentState) else np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"state contains non-finite values: {arr}")
    return arr


def _as_param_array(theta) -> np.ndarray:
    arr = theta.as_array() if isinstance(theta, ParamVector) else np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"parameters contain non-finite values: {arr}")
    return arr


def _check_population(population: int) -> None:
    if population < 1:
        raise DomainError(f"population must be a positive integer, got {population}")


# --- Drift ---

def drift(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Noise-free step on arrays. Accepts a single state (5,) or an ensemble (J, 5)
    with matching parameter rows. The output is not projected into the admissible region.
    """
    c, e, i, r = x[..., C], x[..., E], x[..., I], x[..., R]
    alpha, beta, lam, gamma, phi = (theta[..., k] for k in range(5))
    out = np.empty(np.broadcast_shapes(x.shape, theta.shape), dtype=float)
    out[..., C] = c - alpha * c
    out[..., E] = e + beta * c * i - lam * e
    out[..., I] = i + lam * e - gamma * i
    out[..., R] = r + gamma * i
    out[..., D] = phi * r + phi * gamma * i
    return out


def deterministic_step(x: CompartmentState, theta: ParamVector) -> CompartmentState:
    return CompartmentState.from_array(drift(_as_state_array(x), _as_param_array(theta)))


def deterministic_gap(x: np.ndarray, theta: np.ndarray, n_days: int) -> np.ndarray:
    """Iterates the drift n_days times; the conditional mean of the state after a reporting gap."""
    if n_days < 0:
        raise DomainError(f"n_days must be >= 0, got {n_days}")
    out = np.array(x, dtype=float, copy=True)
    for _ in range(n_days):
        out = drift(out, theta)
    return out


# --- Noise ---

def noise_factor(theta, population: int) -> np.ndarray:
    """
    5x4 matrix L with Q(theta) = L @ L.T. Columns are the independent noise terms
    (alpha, beta, lambda, gamma); D inherits the gamma term scaled by -phi_f.
    """
    _check_population(population)
    t = _as_param_array(theta)
    if np.any(t < 0.0):
        raise DomainError(f"rates must be nonnegative, got {t}")
    incidence = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 1.0, 0.0],
        [0.0, 0.0, -1.0, 1.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, -t[PHI]],
    ])
    return incidence * (np.sqrt(t[:4]) / population)


def process_covariance(theta: ParamVector, population: int) -> ProcessCovariance:
    _check_population(population)
    alpha, beta, lam, gamma, phi = _as_param_array(theta)
    q = np.array([
        [alpha, 0.0, 0.0, 0.0, 0.0],
        [0.0, lam + beta, -lam, 0.0, 0.0],
        [0.0, -lam, lam + gamma, -gamma, -gamma * phi],
        [0.0, 0.0, -gamma, gamma, gamma * phi],
        [0.0, 0.0, -gamma * phi, gamma * phi, gamma * phi ** 2],
    ]) / float(population) ** 2
    return ProcessCovariance(q=q)


# --- Sampling ---

def sample_state_array(
    x: np.ndarray,
    theta: np.ndarray,
    population: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_TRUNCATION_CAP,
) -> tuple[np.ndarray, bool]:
    """One stochastic day on arrays. Returns (next state, whether the projection fallback was used)."""
    draw = truncated_normal_sample(drift(x, theta), None, OMEGA, rng, cap, factor=noise_factor(theta, population))
    return draw.value, draw.projected


def sample_next_state(
    x: CompartmentState,
    theta: ParamVector,
    population: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_TRUNCATION_CAP,
) -> CompartmentState:
    value, _ = sample_state_array(_as_state_array(x), _as_param_array(theta), population, rng, cap)
    return CompartmentState.from_array(value)


def propagate_path(
    x: np.ndarray,
    theta: np.ndarray,
    n_days: int,
    population: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_TRUNCATION_CAP,
) -> tuple[np.ndarray, int]:
    """Samples n_days daily states under fixed theta. Returns the (n_days, 5) path and the fallback count."""
    if n_days < 0:
        raise DomainError(f"n_days must be >= 0, got {n_days}")
    path = np.empty((n_days, len(STATE_NAMES)), dtype=float)
    factor = noise_factor(theta, population)
    fallbacks = 0
    current = x
    for day in range(n_days):
        draw = truncated_normal_sample(drift(current, theta), None, OMEGA, rng, cap, factor=factor)
        fallbacks += draw.projected
        current = draw.value
        path[day] = current
    return path, fallbacks


def propagate_gap(
    x: CompartmentState,
    theta: ParamVector,
    n_days: int,
    population: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_TRUNCATION_CAP,
) -> CompartmentState:
    if n_days == 0:
        return x
    path, _ = propagate_path(_as_state_array(x), _as_param_array(theta), n_days, population, rng, cap)
    return CompartmentState.from_array(path[-1])


# --- Reproduction ratio ---

def r0(x: CompartmentState, theta: ParamVector) -> float:
    """Time-varying basic reproductive ratio c * beta / gamma."""
    if theta.gamma <= 0.0:
        raise DomainError(f"R0 is undefined for gamma = {theta.gamma}")
    return x.c * theta.beta / theta.gamma


def r0_values(states: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Per-particle c * beta / gamma for (J, 5) arrays."""
    gamma = params[..., GAMMA]
    if np.any(gamma <= 0.0):
        raise DomainError("R0 is undefined for particles with gamma = 0")
    return states[..., C] * params[..., BETA] / gamma

