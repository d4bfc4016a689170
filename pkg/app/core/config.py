import os
from typing import Literal, Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="LOOPX_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",  # Allow unrelated LOOPX_* variables
    )

    # Worker cap for per-scene parallelism (None = auto)
    threads: Optional[int] = None

    # Logging
    log_level: str = "INFO"
    log_format: Literal["console", "json"] = "console"

    @field_validator("threads", mode="before")
    @classmethod
    def parse_threads(cls, v):
        """Treat an empty LOOPX_THREADS as unset."""
        if isinstance(v, str) and not v.strip():
            return None
        return v

    @field_validator("threads")
    @classmethod
    def check_threads(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("threads must be >= 1")
        return v

    def resolved_threads(self, override: Optional[int] = None) -> int:
        """--threads wins over LOOPX_THREADS, which wins over the cpu-count default."""
        if override is not None:
            return max(1, override)
        if self.threads is not None:
            return self.threads
        return max(1, min(4, os.cpu_count() or 1))


def get_settings() -> Settings:
    return Settings()
