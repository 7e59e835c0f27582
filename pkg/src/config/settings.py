"""
src/config/settings.py

Environment-driven settings for the DiSeP simulation toolkit.
Values come from DISEP_* environment variables or a local .env file;
command-line flags override them.
"""

from functools import lru_cache
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Base configuration class for the toolkit.
    """

    model_config = SettingsConfigDict(
        env_prefix="DISEP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Output settings
    OUT_DIR: str = Field("out", description="Default directory for generated artifacts.")

    # Logging settings
    LOG_LEVEL: str = Field("INFO", description="Logging level: DEBUG, INFO, WARNING, ERROR, CRITICAL.")
    LOG_FORMAT: str = Field("json", description="Log rendering: json or console.")
    LOG_FILE: Optional[str] = Field(None, description="Optional rotating log file path.")

    # Execution settings
    WORKERS: int = Field(4, description="Worker threads used for sweep grid points.")
    OVERSAMPLE: int = Field(50, description="Simulation sub-steps per carrier period.")

    # Verification settings
    ORACLE_CASES: int = Field(1000, description="Default randomized draws per loop family for verify-oracle.")
    SEED: int = Field(1, description="Default random seed for verification batches.")

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError("LOG_LEVEL must be one of: DEBUG, INFO, WARNING, ERROR, CRITICAL.")
        return value

    @field_validator("LOG_FORMAT")
    @classmethod
    def validate_log_format(cls, value: str) -> str:
        if value not in {"json", "console"}:
            raise ValueError("LOG_FORMAT must be one of: json, console.")
        return value

    @field_validator("WORKERS", "OVERSAMPLE", "ORACLE_CASES")
    @classmethod
    def validate_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be a positive integer.")
        return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Returns the process-wide settings instance."""
    return Settings()
