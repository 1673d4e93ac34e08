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
from abc import ABC, abstractmethod

import numpy as np
from pydantic import BaseModel, ConfigDict


class BasePrior(BaseModel, ABC):
    """
    Abstract base class for a univariate prior. Subclasses are pydantic models so a
    prior round-trips through the JSON run configuration.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> float:
        """Draws one value from the prior."""

    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Closed interval containing every possible draw."""

    @abstractmethod
    def mean(self) -> float:
        pass

    def within(self, lo: float, hi: float = math.inf) -> bool:
        s_lo, s_hi = self.support()
        return lo <= s_lo and s_hi <= hi
