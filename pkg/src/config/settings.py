"""Toolkit settings and configuration."""

import os
from functools import lru_cache
from typing import Literal, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables (prefix ``GENOBIN_``)."""

    # Runtime
    threads: Optional[int] = None
    log_level: str = "info"
    seed: int = 0

    # Parsing
    quality_alphabet_size: int = 64
    quality_offset: int = 33
    n_policy: Literal["substitute", "reject"] = "substitute"
    n_substitute: int = 0

    # Entropy coding
    rans_precision: int = 12
    adaptive_rate: int = 4
    adaptive_update_period: int = 16

    # Optimisers
    kmeans_max_iter: int = 50
    block_size: int = 1_000_000

    @property
    def worker_count(self) -> int:
        """Number of worker threads, defaulting to the available cores."""
        return self.threads or os.cpu_count() or 1

    model_config = SettingsConfigDict(env_prefix="GENOBIN_", env_file=".env", env_file_encoding="utf-8")


@lru_cache()
def get_settings() -> Settings:
    """Get cached toolkit settings."""
    return Settings()
