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

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Centralized application settings.
    Values are loaded from a .env file or environment variables prefixed with SEIRKDPF_.
    """
    # Filesystem Paths
    config: str | None = Field(None, description="Default JSON run configuration. None means built-in defaults.")
    output_dir: str = "output"

    # Runtime
    log_level: str = "INFO"
    workers: int = Field(1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="SEIRKDPF_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

# Create a single, importable instance of the settings
settings = Settings()
