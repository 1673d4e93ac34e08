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
Weighted posterior summaries of particle ensembles.

A summary is a long-format table with one row per (day, quantity):

    day_index, date, observed, quantity, mean, median, q05, q95

Quantities fall in three groups: the latent state (c, E, I, R, D plus the
implied cumulative counts latent_cases = P(I+R) and latent_deaths = P*D), the
parameters, and R0 = c*beta/gamma computed per particle before aggregation.
Quantiles use the inverse weighted CDF: the smallest value whose cumulative
weight reaches q.
"""
import pathlib
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np
import orjson
import pandas as pd

from seirkdpf.core.model import D, I, PARAM_NAMES, R, STATE_NAMES, r0_values
from seirkdpf.errors import SummaryError
from seirkdpf.logging_setup import get_logger

logger = get_logger("summary")

DEFAULT_QUANTILES = (0.05, 0.95)
STATE_QUANTITIES = STATE_NAMES + ("latent_cases", "latent_deaths")
PARAM_QUANTITIES = PARAM_NAMES
R0_QUANTITIES = ("R0",)
GROUPS = {"state": STATE_QUANTITIES, "param": PARAM_QUANTITIES, "r0": R0_QUANTITIES}
BASE_COLUMNS = ("day_index", "date", "observed", "quantity", "mean", "median")

_QUANTILE_COLUMN = re.compile(r"^q(\d+)(?:p(\d+))?$")


def quantile_column(q: float) -> str:
    """0.05 -> 'q05', 0.975 -> 'q97p5'."""
    if not 0.0 < q < 1.0:
        raise SummaryError(f"quantile must lie in (0, 1), got {q}")
    pct = round(q * 100, 6)
    whole = int(pct)
    frac = f"{pct - whole:.6f}"[2:].rstrip("0")
    return f"q{whole:02d}" + (f"p{frac}" if frac else "")


def quantile_from_column(name: str) -> float:
    match = _QUANTILE_COLUMN.match(name)
    if not match:
        raise SummaryError(f"not a quantile column: {name!r}")
    whole, frac = match.groups()
    return float(f"{int(whole)}.{frac or '0'}") / 100.0


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if values.size == 0 or not total > 0.0:
        raise SummaryError("weighted quantile needs at least one positive weight")
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order]) / total
    # tolerance keeps q = 0.5 on {0.5, 0.5} at the lower value despite rounding
    idx = int(np.searchsorted(cumulative, q - 1e-12, side="left"))
    return float(values[order][min(idx, values.size - 1)])


def _quantity_columns(states: np.ndarray, params: np.ndarray, population: int) -> dict[str, np.ndarray]:
    columns = {name: states[:, k] for k, name in enumerate(STATE_NAMES)}
    columns["latent_cases"] = population * (states[:, I] + states[:, R])
    columns["latent_deaths"] = population * states[:, D]
    columns.update({name: params[:, k] for k, name in enumerate(PARAM_NAMES)})
    columns["R0"] = r0_values(states, params)
    return columns


def summarize_arrays(
    states: np.ndarray,
    params: np.ndarray,
    weights: np.ndarray,
    day_index: int,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    *,
    population: int = 1_000_000,
    epoch: date | None = None,
    observed: bool = True,
) -> list[dict]:
    """Summary rows for one day from column-wise particle arrays."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0.0:
        raise SummaryError(f"day {day_index}: weights sum to {total}")
    weights = weights / total
    day = (epoch + timedelta(days=day_index)).isoformat() if epoch is not None else ""
    rows = []
    for quantity, values in _quantity_columns(np.asarray(states), np.asarray(params), population).items():
        row = {
            "day_index": int(day_index),
            "date": day,
            "observed": bool(observed),
            "quantity": quantity,
            "mean": float(weights @ values),
            "median": weighted_quantile(values, weights, 0.5),
        }
        for q in quantiles:
            row[quantile_column(q)] = weighted_quantile(values, weights, q)
        rows.append(row)
    return rows


def summarize_ensemble(ensemble, quantiles: Sequence[float] = DEFAULT_QUANTILES, **kwargs) -> list[dict]:
    return summarize_arrays(
        ensemble.states, ensemble.params, ensemble.weights, ensemble.day_index, quantiles, **kwargs
    )


@dataclass
class TrajectorySummary:
    frame: pd.DataFrame
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES

    @property
    def columns(self) -> list[str]:
        return list(BASE_COLUMNS) + [quantile_column(q) for q in self.quantiles]

    @classmethod
    def from_rows(cls, rows: list[dict], quantiles: Sequence[float] = DEFAULT_QUANTILES) -> "TrajectorySummary":
        quantiles = tuple(quantiles)
        columns = list(BASE_COLUMNS) + [quantile_column(q) for q in quantiles]
        frame = pd.DataFrame(rows, columns=columns)
        if not rows:
            frame = frame.astype({"day_index": "int64", "observed": "bool"})
        return cls(frame=frame.reset_index(drop=True), quantiles=quantiles)

    def select(self, group: str) -> "TrajectorySummary":
        if group not in GROUPS:
            raise SummaryError(f"unknown quantity group {group!r}; expected one of {sorted(GROUPS)}")
        frame = self.frame[self.frame["quantity"].isin(GROUPS[group])].reset_index(drop=True)
        return TrajectorySummary(frame=frame, quantiles=self.quantiles)

    def days(self) -> list[int]:
        return sorted(self.frame["day_index"].unique().tolist())

    def value(self, day_index: int, quantity: str, column: str = "mean") -> float:
        hit = self.frame[(self.frame["day_index"] == day_index) & (self.frame["quantity"] == quantity)]
        if hit.empty:
            raise SummaryError(f"no summary for {quantity!r} on day {day_index}")
        return float(hit.iloc[0][column])

    def equals(self, other: "TrajectorySummary") -> bool:
        return self.quantiles == other.quantiles and self.frame.equals(other.frame)


@dataclass
class SummaryBuilder:
    """Accumulates rows day by day while the filter runs."""
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    population: int = 1_000_000
    epoch: date | None = None
    rows: list[dict] = field(default_factory=list)

    def add_ensemble(self, ensemble, observed: bool = True) -> None:
        self.rows.extend(summarize_ensemble(
            ensemble, self.quantiles, population=self.population, epoch=self.epoch, observed=observed
        ))

    def add_arrays(self, states, params, weights, day_index: int, observed: bool) -> None:
        self.rows.extend(summarize_arrays(
            states, params, weights, day_index, self.quantiles,
            population=self.population, epoch=self.epoch, observed=observed,
        ))

    def build(self) -> TrajectorySummary:
        return TrajectorySummary.from_rows(self.rows, self.quantiles)


def summarize(
    ensembles: Iterable,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    *,
    population: int = 1_000_000,
    epoch: date | None = None,
    observed: Sequence[bool] | None = None,
) -> TrajectorySummary:
    """Summarizes a sequence of ensembles; `observed` defaults to True for all of them."""
    ensembles = list(ensembles)
    if observed is not None and len(observed) != len(ensembles):
        raise SummaryError(f"{len(observed)} observed flags for {len(ensembles)} ensembles")
    builder = SummaryBuilder(quantiles=tuple(quantiles), population=population, epoch=epoch)
    for k, ensemble in enumerate(ensembles):
        builder.add_ensemble(ensemble, observed=True if observed is None else observed[k])
    return builder.build()


# --- Export ---

def _records(summary: TrajectorySummary) -> list[dict]:
    return summary.frame[summary.columns].to_dict(orient="records")


def export_summary(summary: TrajectorySummary, fmt: str, path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            frame = summary.frame[summary.columns].copy()
            frame["observed"] = frame["observed"].map({True: "true", False: "false"})
            frame.to_csv(path, index=False, lineterminator="\n", float_format=None)
        elif fmt == "json":
            payload = [
                {k: (v.item() if hasattr(v, "item") else v) for k, v in record.items()}
                for record in _records(summary)
            ]
            path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2))
        else:
            raise SummaryError(f"unsupported summary format {fmt!r}; expected 'csv' or 'json'")
    except OSError as e:
        raise SummaryError(f"cannot write summary to {path}: {e}") from e
    logger.info(f"Wrote {len(summary.frame)} summary rows to {path}.")
    return path


def _normalize_frame(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    frame["day_index"] = frame["day_index"].astype("int64")
    frame["date"] = frame["date"].astype(str)
    frame["quantity"] = frame["quantity"].astype(str)
    if frame["observed"].dtype != bool:
        frame["observed"] = frame["observed"].map(
            lambda v: v if isinstance(v, bool) else str(v).strip().lower() == "true"
        ).astype(bool)
    for column in frame.columns[4:]:
        frame[column] = frame[column].astype(float)
    return frame


def load_summary(path: str | pathlib.Path) -> TrajectorySummary:
    path = pathlib.Path(path)
    try:
        if path.suffix == ".json":
            records = orjson.loads(path.read_bytes())
            columns = list(records[0].keys()) if records else list(BASE_COLUMNS)
            frame = pd.DataFrame(records, columns=columns)
        else:
            frame = pd.read_csv(
                path, dtype={"date": str, "quantity": str, "observed": str},
                keep_default_na=False, float_precision="round_trip",
            )
    except (OSError, orjson.JSONDecodeError, pd.errors.ParserError) as e:
        raise SummaryError(f"cannot read summary {path}: {e}") from e
    missing = [c for c in BASE_COLUMNS if c not in frame.columns]
    if missing:
        raise SummaryError(f"{path} is missing summary columns {missing}")
    quantiles = tuple(quantile_from_column(c) for c in frame.columns[len(BASE_COLUMNS):])
    return TrajectorySummary(frame=_normalize_frame(frame).reset_index(drop=True), quantiles=quantiles)

