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
Exception hierarchy. The CLI maps these onto exit codes.
"""


class SeirKdpfError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SeirKdpfError):
    """Invalid or unknown configuration key. `key` is the dotted path of the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ReportParseError(SeirKdpfError):
    """A report row could not be parsed (bad date, bad count, missing value)."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class DataValidationError(SeirKdpfError):
    """A report row parsed but breaks a dataset invariant (ordering, monotonicity)."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class DomainError(SeirKdpfError, ValueError):
    """A numerical precondition does not hold (gamma = 0, non-finite input, bad discount...)."""


class CalibrationError(SeirKdpfError):
    """The observation link regression has a degenerate design."""


class FilterDegeneracyError(SeirKdpfError):
    """Every particle has zero likelihood for a report."""

    def __init__(self, day_index: int, message: str = "filter degeneracy: all log-likelihoods are -inf"):
        self.day_index = day_index
        super().__init__(f"day {day_index}: {message}")


class SummaryError(SeirKdpfError):
    """Posterior summaries cannot be built (empty ensemble, mismatched day grids)."""
