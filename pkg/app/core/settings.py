"""
Process settings.

This module reads the environment-level settings of the re-ranking
toolkit. Values come from environment variables prefixed with
``GRAPH_RERANK_`` and, when present, from a local ``.env`` file.

Environment variables:
    - GRAPH_RERANK_LOG_LEVEL:  Logging verbosity (default: INFO)
    - GRAPH_RERANK_LOG_FORMAT: Logging format string
    - GRAPH_RERANK_WORKERS:    Default worker count for per-probe evaluation (default: 1)

Usage example:
    >>> from app.core.settings import get_settings
    >>> settings = get_settings()
    >>> print(settings.log_level)
    INFO
"""

from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Environment settings shared by every subcommand.

    Example:
        >>> Settings(log_level="debug").log_level
        'DEBUG'
    """

    model_config = SettingsConfigDict(env_prefix="GRAPH_RERANK_", extra="ignore")

    log_level: str = "INFO"
    """Name of the logging level (e.g. `DEBUG`, `INFO`, `WARNING`)."""

    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    """Format string handed to the stream handler."""

    workers: int = Field(default=1, ge=1)
    """Worker count used when `--workers` is not given. 1 keeps evaluation bit-reproducible."""

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_level(cls, v):
        # accepts 'debug', 'Debug', 'DEBUG'
        if isinstance(v, str):
            v = v.strip().upper()
        return v


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """
    Build the process settings once.

    `load_dotenv()` runs before the environment is read so that a local
    `.env` file can provide the same variables.

    Returns:
        Settings: The cached settings instance.
    """

    load_dotenv()
    return Settings()
