"""Runtime settings, read from ``LINLAB_*`` environment variables or a local ``.env``."""

from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LabSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="LINLAB_", env_file=".env", extra="ignore")

    log_level: str = "WARNING"
    seed: int = Field(default=0, ge=0)
    tolerance: float = Field(default=1e-8, gt=0.0)
    certify_trials: int = Field(default=100, ge=1)
    restarts: int = Field(default=16, ge=1)
    max_iters: int = Field(default=200, ge=1)
    workers: int = Field(default=1, ge=1)
    factor_dim: int = Field(default=4, ge=2)
    steps_per_unit_time: int = Field(default=1000, ge=1)
    search_steps_per_unit_time: int = Field(default=50, ge=1)


@lru_cache
def get_settings() -> LabSettings:
    return LabSettings()
