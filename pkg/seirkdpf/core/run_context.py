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

import pathlib
from datetime import date

import numpy as np
import orjson

from seirkdpf.config import Settings
from seirkdpf.core.sampling import PhiloxStreams
from seirkdpf.errors import DataValidationError
from seirkdpf.filtering.state import ParticleEnsemble
from seirkdpf.logging_setup import get_logger
from seirkdpf.priors.spec import RunConfig, load_run_config

logger = get_logger("RunContext")

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


class RunContext:
    """
    Resolves what one command needs: the validated run configuration (file plus
    command-line overrides), the random streams and the output directory.
    Everything is built on first access.
    """
    def __init__(
        self,
        settings: Settings,
        config_path: str | pathlib.Path | None = None,
        overrides: dict | None = None,
        out_dir: str | pathlib.Path | None = None,
    ):
        self.settings = settings
        self.config_path = config_path if config_path is not None else settings.config
        self.overrides = overrides or {}
        self._out_dir = pathlib.Path(out_dir if out_dir is not None else settings.output_dir)

        self._run_config: RunConfig | None = None
        self._streams: PhiloxStreams | None = None
        self._output_ready = False

    @property
    def run_config(self) -> RunConfig:
        if self._run_config is None:
            overrides = dict(self.overrides)
            filter_overrides = dict(overrides.get("filter", {}))
            if "workers" in self.settings.model_fields_set:
                filter_overrides.setdefault("workers", self.settings.workers)
            overrides["filter"] = filter_overrides
            self._run_config = load_run_config(self.config_path, overrides)
            f = self._run_config.filter
            logger.info(
                f"Configuration from {self.config_path or 'defaults'}: J={f.num_particles}, "
                f"discount={f.discount}, seed={f.seed}, P={f.population}."
            )
        return self._run_config

    @property
    def streams(self) -> PhiloxStreams:
        if self._streams is None:
            self._streams = PhiloxStreams(self.run_config.filter.seed)
        return self._streams

    @property
    def output_dir(self) -> pathlib.Path:
        if not self._output_ready:
            self._out_dir.mkdir(parents=True, exist_ok=True)
            self._output_ready = True
        return self._out_dir

    def output_path(self, name: str) -> pathlib.Path:
        return self.output_dir / name

    def write_json(self, name: str, payload) -> pathlib.Path:
        path = self.output_path(name)
        path.write_bytes(orjson.dumps(payload, option=JSON_OPTIONS))
        logger.info(f"Wrote {path}.")
        return path


# --- Snapshot files ---

def save_snapshots(
    path: str | pathlib.Path, snapshots: list[ParticleEnsemble], population: int, epoch: date | None = None
) -> pathlib.Path:
    """Stacks per-report ensembles into one .npz archive."""
    path = pathlib.Path(path)
    np.savez_compressed(
        path,
        states=np.stack([s.states for s in snapshots]),
        params=np.stack([s.params for s in snapshots]),
        weights=np.stack([s.weights for s in snapshots]),
        day_index=np.array([s.day_index for s in snapshots], dtype=np.int64),
        generation=np.array([s.generation for s in snapshots], dtype=np.int64),
        population=np.array(population, dtype=np.int64),
        epoch=np.array(epoch.isoformat() if epoch else ""),
    )
    return path


def load_snapshots(path: str | pathlib.Path) -> tuple[list[ParticleEnsemble], int, date | None]:
    try:
        with np.load(path) as archive:
            states, params, weights = archive["states"], archive["params"], archive["weights"]
            days, generations = archive["day_index"], archive["generation"]
            population = int(archive["population"])
            epoch_text = str(archive["epoch"])
    except (OSError, KeyError, ValueError) as e:
        raise DataValidationError(f"cannot read snapshots from {path}: {e}") from e
    snapshots = [
        ParticleEnsemble(states[k], params[k], weights[k], int(days[k]), int(generations[k]))
        for k in range(len(days))
    ]
    epoch = date.fromisoformat(epoch_text) if epoch_text else None
    return snapshots, population, epoch
