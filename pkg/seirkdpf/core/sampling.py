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
Random primitives shared by the model, the priors and the filter.

Streams are NumPy Generators over the counter-based Philox bit generator.
Each stream is keyed by (seed, purpose, *indices) through SeedSequence
spawn keys, so a particle's draws depend only on its own key and never on
how particles are scheduled across workers.
"""
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Protocol

import numpy as np

from seirkdpf.errors import DomainError
from seirkdpf.logging_setup import get_logger

logger = get_logger("sampling")

DEFAULT_TRUNCATION_CAP = 1000


class Purpose(IntEnum):
    INIT = 0
    RESAMPLE = 1
    PARTICLE = 2
    SIMULATE = 3
    CALENDAR = 4


class StreamFactory(Protocol):
    def stream(self, purpose: Purpose, *key: int) -> np.random.Generator: ...


@dataclass(frozen=True)
class PhiloxStreams:
    """Pinned generator family: Philox4x64 seeded from SeedSequence(seed, spawn_key=(purpose, *key))."""
    seed: int

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def stream(self, purpose: Purpose, *key: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(purpose), *(int(k) for k in key)))
        return np.random.Generator(np.random.Philox(seq))


# --- Univariate samplers ---

def uniform_sample(lo: float, hi: float, rng: np.random.Generator) -> float:
    if not lo <= hi:
        raise DomainError(f"uniform bounds must satisfy lo <= hi, got ({lo}, {hi})")
    return lo + (hi - lo) * float(rng.random())


def beta_sample(shape1: float, shape2: float, rng: np.random.Generator) -> float:
    """
    Draws from Beta(shape1, shape2) with Cheng's rejection algorithms:
    BB when both shapes exceed 1, BC otherwise. Only uniform draws are consumed,
    so results are identical on every platform for a given stream.
    """
    if not (shape1 > 0 and shape2 > 0) or not (math.isfinite(shape1) and math.isfinite(shape2)):
        raise DomainError(f"beta shapes must be positive and finite, got ({shape1}, {shape2})")
    if min(shape1, shape2) > 1.0:
        return _cheng_bb(shape1, shape2, rng)
    return _cheng_bc(shape1, shape2, rng)


_LOG4 = math.log(4.0)


def _w_from_u(u1: float, scale: float, shape: float) -> tuple[float, float]:
    v = scale * math.log(u1 / (1.0 - u1))
    w = shape * math.exp(v) if v < 700.0 else math.inf
    return v, w


def _cheng_bb(shape1: float, shape2: float, rng: np.random.Generator) -> float:
    a, b = min(shape1, shape2), max(shape1, shape2)
    alpha = a + b
    beta = math.sqrt((alpha - 2.0) / (2.0 * a * b - alpha))
    gamma = a + 1.0 / beta
    while True:
        u1, u2 = _open_uniforms(rng)
        v, w = _w_from_u(u1, beta, a)
        z = u1 * u1 * u2
        r = gamma * v - _LOG4
        s = a + r - w
        if s + 2.609438 >= 5.0 * z:
            break
        t = math.log(z)
        if s > t:
            break
        if r + alpha * math.log(alpha / (b + w)) >= t:
            break
    return _finish(w, b, first_is_w=(shape1 == a))


def _cheng_bc(shape1: float, shape2: float, rng: np.random.Generator) -> float:
    a, b = max(shape1, shape2), min(shape1, shape2)
    alpha = a + b
    beta = 1.0 / b
    delta = 1.0 + a - b
    k1 = delta * (0.0138889 + 0.0416667 * b) / (a * beta - 0.777778)
    k2 = 0.25 + (0.5 + 0.25 / delta) * b
    while True:
        u1, u2 = _open_uniforms(rng)
        if u1 < 0.5:
            y = u1 * u2
            z = u1 * y
            if 0.25 * u2 + z - y >= k1:
                continue
        else:
            z = u1 * u1 * u2
            if z <= 0.25:
                v, w = _w_from_u(u1, beta, a)
                break
            if z >= k2:
                continue
        v, w = _w_from_u(u1, beta, a)
        if alpha * (math.log(alpha / (b + w)) + v) - _LOG4 >= math.log(z):
            break
    return _finish(w, b, first_is_w=(shape1 == a))


def _finish(w: float, b: float, first_is_w: bool) -> float:
    if math.isinf(w):
        return 1.0 if first_is_w else 0.0
    return w / (b + w) if first_is_w else b / (b + w)


def _open_uniforms(rng: np.random.Generator) -> tuple[float, float]:
    # u1 in (0, 1) so the logit stays finite
    while True:
        u = rng.random(2)
        if 0.0 < u[0] < 1.0 and u[1] > 0.0:
            return float(u[0]), float(u[1])


# --- Truncation regions ---

class Region(Protocol):
    def contains(self, x: np.ndarray) -> bool: ...
    def project(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box lower <= x <= upper (upper may be +inf)."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise DomainError("box region needs matching bounds with lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class SimplexRegion:
    """
    Nonnegative orthant with sum(x[sum_indices]) <= 1 and x[capped_indices] <= 1.
    With the default indices this is the admissible state set for [c, E, I, R, D].
    """
    sum_indices: tuple[int, ...] = (1, 2, 3)
    capped_indices: tuple[int, ...] = (0,)
    _sum_idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_sum_idx", np.asarray(self.sum_indices, dtype=int))

    def contains(self, x: np.ndarray) -> bool:
        if not np.all(np.isfinite(x)) or np.any(x < 0.0):
            return False
        if any(x[i] > 1.0 for i in self.capped_indices):
            return False
        return bool(x[self._sum_idx].sum() <= 1.0)

    def project(self, x: np.ndarray) -> np.ndarray:
        y = np.maximum(x, 0.0)
        for i in self.capped_indices:
            y[i] = min(y[i], 1.0)
        total = y[self._sum_idx].sum()
        if total > 1.0:
            y[self._sum_idx] *= (1.0 - 1e-12) / total
        return y


OMEGA = SimplexRegion()


# --- Truncated multivariate normal ---

class TruncatedDraw(NamedTuple):
    value: np.ndarray
    attempts: int
    projected: bool


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """
    Returns F with F @ F.T == cov for a symmetric PSD matrix, via eigh with
    negative round-off eigenvalues clipped to zero. Works for singular covariances.
    """
    cov = np.asarray(cov, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if eigvals.size and eigvals.min() < -1e-12 * max(1.0, abs(eigvals.max())):
        raise DomainError(f"covariance is not positive semidefinite (min eigenvalue {eigvals.min():.3e})")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def truncated_normal_sample(
    mean: np.ndarray,
    cov: np.ndarray | None,
    region: Region,
    rng: np.random.Generator,
    cap: int = DEFAULT_TRUNCATION_CAP,
    *,
    factor: np.ndarray | None = None,
) -> TruncatedDraw:
    """
    Draws N(mean, cov) restricted to `region`. Rejection sampling runs for at most
    `cap` attempts; after that an unconstrained draw is projected onto the region.
    Pass `factor` (cov = factor @ factor.T) to skip the decomposition, e.g. when the
    same covariance is shared by many draws or is rank deficient by construction.
    """
    mean = np.asarray(mean, dtype=float)
    if factor is None:
        if cov is None:
            raise DomainError("either cov or factor is required")
        factor = covariance_factor(cov)
    if cap < 1:
        raise DomainError(f"truncation cap must be >= 1, got {cap}")

    if not np.any(factor):
        if region.contains(mean):
            return TruncatedDraw(mean.copy(), 1, False)
        logger.debug("Degenerate covariance with mean outside region; projecting.")
        return TruncatedDraw(region.project(mean.copy()), 1, True)

    k = factor.shape[1]
    candidate = mean
    for attempt in range(1, cap + 1):
        candidate = mean + factor @ rng.standard_normal(k)
        if region.contains(candidate):
            return TruncatedDraw(candidate, attempt, False)
    logger.debug(f"Truncation cap of {cap} exhausted; projecting unconstrained draw.")
    return TruncatedDraw(region.project(candidate), cap, True)
