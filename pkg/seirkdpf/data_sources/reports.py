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
Ingestion of cumulative case/death reports published at irregular intervals.

File layout (header is matched exactly):

    date,cum_cases,cum_deaths
    2014-03-23,49,29
    2014-03-31,112,70

Dates are ISO-8601, counts are integers. Case categories (confirmed, probable,
suspected) must be summed upstream. Rows with empty counts are rejected; the
filter carries the state across days without reports. Error row numbers are
file line numbers (the header is line 1).
"""
import pathlib
import re
from dataclasses import dataclass
from datetime import date
from typing import NamedTuple

import pandas as pd

from seirkdpf.core.observation import Observation
from seirkdpf.errors import DataValidationError, ReportParseError
from seirkdpf.logging_setup import get_logger

logger = get_logger("reports")

HEADER = ("date", "cum_cases", "cum_deaths")
_COUNT = re.compile(r"^\d+$")


@dataclass(frozen=True)
class ReportDataset:
    epoch: date
    records: tuple[Observation, ...]

    @property
    def horizon(self) -> int:
        return self.records[-1].day_index if self.records else 0

    def __len__(self) -> int:
        return len(self.records)


class CalendarEntry(NamedTuple):
    day_index: int
    gap: int


def _parse_count(raw: str, field: str, row: int) -> int:
    value = raw.strip()
    if not value:
        raise ReportParseError(f"missing {field}", row=row)
    if not _COUNT.match(value):
        raise ReportParseError(f"{field} must be a nonnegative integer, got {raw!r}", row=row)
    return int(value)


def validate_records(records: list[Observation], rows: list[int] | None = None) -> None:
    """Checks ordering and cumulative monotonicity. `rows` maps records to file line numbers."""
    rows = rows or list(range(1, len(records) + 1))
    previous: Observation | None = None
    for obs, row in zip(records, rows):
        if obs.cum_cases < 1:
            raise DataValidationError(f"cum_cases must be positive, got {obs.cum_cases}", row=row)
        if obs.cum_deaths < 1:
            # both channels enter the likelihood on the log scale
            raise DataValidationError(
                f"cum_deaths must be at least 1 to enter the log-normal likelihood, got {obs.cum_deaths}", row=row
            )
        if obs.cum_deaths > obs.cum_cases:
            raise DataValidationError(
                f"cum_deaths ({obs.cum_deaths}) exceeds cum_cases ({obs.cum_cases})", row=row
            )
        if previous is not None:
            if obs.date == previous.date:
                raise DataValidationError(f"duplicate date {obs.date.isoformat()}", row=row)
            if obs.date < previous.date:
                raise DataValidationError(
                    f"date {obs.date.isoformat()} is before the previous report {previous.date.isoformat()}", row=row
                )
            if obs.cum_cases < previous.cum_cases:
                raise DataValidationError(
                    f"cum_cases decreased from {previous.cum_cases} to {obs.cum_cases}", row=row
                )
            if obs.cum_deaths < previous.cum_deaths:
                raise DataValidationError(
                    f"cum_deaths decreased from {previous.cum_deaths} to {obs.cum_deaths}", row=row
                )
        previous = obs


def dataset_from_rows(rows: list[tuple[date, int, int]]) -> ReportDataset:
    """Builds a validated dataset from (date, cum_cases, cum_deaths) tuples; epoch is the first date."""
    if not rows:
        raise DataValidationError("report dataset is empty")
    epoch = rows[0][0]
    records = [Observation(d, (d - epoch).days, cases, deaths) for d, cases, deaths in rows]
    validate_records(records)
    return ReportDataset(epoch=epoch, records=tuple(records))


def _cell(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def parse_report_csv(path: str | pathlib.Path) -> ReportDataset:
    path = pathlib.Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except FileNotFoundError as e:
        raise ReportParseError(f"report file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ReportParseError(f"{path} is empty", row=1) from e
    except pd.errors.ParserError as e:
        raise ReportParseError(f"malformed report file {path}: {e}") from e

    header = tuple(str(c).strip() for c in frame.columns)
    if header != HEADER:
        raise ReportParseError(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}", row=1)

    parsed: list[tuple[date, int, int]] = []
    line_numbers: list[int] = []
    for offset, values in enumerate(frame.itertuples(index=False, name=None)):
        row = offset + 2
        cells = [_cell(v) for v in values]
        if not any(cells):
            continue
        try:
            day = date.fromisoformat(cells[0])
        except ValueError as e:
            raise ReportParseError(f"malformed date {cells[0]!r}", row=row) from e
        parsed.append((day, _parse_count(cells[1], "cum_cases", row), _parse_count(cells[2], "cum_deaths", row)))
        line_numbers.append(row)

    if not parsed:
        raise DataValidationError(f"{path} contains no reports")
    epoch = parsed[0][0]
    records = [Observation(d, (d - epoch).days, cases, deaths) for d, cases, deaths in parsed]
    validate_records(records, line_numbers)
    logger.info(f"Loaded {len(records)} reports from {path} spanning {records[-1].day_index + 1} days.")
    return ReportDataset(epoch=epoch, records=tuple(records))



def write_report_csv(dataset: ReportDataset, path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(obs.date.isoformat(), obs.cum_cases, obs.cum_deaths) for obs in dataset.records],
        columns=list(HEADER),
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return path



def build_calendar(dataset: ReportDataset) -> list[CalendarEntry]:
    """One entry per report day: (day_index, days since the previous report); the first gap is 0."""
    calendar = []
    previous = None
    for obs in dataset.records:
        gap = 0 if previous is None else obs.day_index - previous
        calendar.append(CalendarEntry(obs.day_index, gap))
        previous = obs.day_index
    return calendar
