try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationException


class Settings(BaseSettings):
    # App Configuration
    app_name: str = "Room Geometry Estimator"
    version: str = "1.0.0"

    # Physical constants
    speed_of_sound: float = 340.0
    sample_rate: int = 8000
    rir_length: int = 4096
    sabine_coeff: float = 0.1611

    # Workers
    workers: int = 1
    prefetch_depth: int = 4

    # Logging
    log_level: str = "INFO"
    log_format: str = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} | {message}"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="RGE_", case_sensitive=False, extra="ignore")


settings = Settings()


class RunConfig(BaseSettings):
    """Every pipeline knob in one place; CLI flags override the config file."""

    # Dataset
    rooms: int = 2000
    val_rooms: int = 400
    test_rooms: int = 400
    rirs_per_room: int = 4
    mode: str = "varying"
    placement: str = "independent"
    seed: int = 7
    length_range: Tuple[float, float] = (6.0, 10.0)
    width_range: Tuple[float, float] = (5.0, 8.0)
    height_range: Tuple[float, float] = (4.0, 6.0)
    rt60_range: Tuple[float, float] = (0.4, 1.0)

    # Training
    epochs: int = 2000
    batch_size: int = 50
    patience: int = 30
    learning_rate: float = 0.001
    betas: Tuple[float, float] = (0.9, 0.999)
    train_seed: int = 1

    # Evaluation
    group_sizes: List[int] = [1, 4, 8, 16]
    bench_iters: int = 3000
    analysis_rooms: int = 8
    analysis_sources: int = 10
    analysis_receivers: int = 10

    model_config = SettingsConfigDict(env_prefix="RGE_RUN_", case_sensitive=False, extra="forbid")

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        if v not in ("fixed", "varying"):
            raise ValueError("mode must be 'fixed' or 'varying'")
        return v

    @field_validator("placement")
    @classmethod
    def validate_placement(cls, v: str) -> str:
        if v not in ("independent", "grid"):
            raise ValueError("placement must be 'independent' or 'grid'")
        return v

    @field_validator("epochs", "rooms", "val_rooms", "test_rooms", "rirs_per_room", "batch_size", "patience", "bench_iters")
    @classmethod
    def validate_counts(cls, v: int, info) -> int:
        floor = 0 if info.field_name == "epochs" else 1
        if v < floor:
            raise ValueError(f"{info.field_name} must be >= {floor}")
        return v


def load_run_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Build a RunConfig with precedence CLI flag > config file > env > default."""
    file_values: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                file_values = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigurationException(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationException(f"Config file {path} is not valid TOML: {e}")

    cli_values = {k: v for k, v in (overrides or {}).items() if v is not None}
    try:
        return RunConfig(**{**file_values, **cli_values})
    except ValidationError as e:
        raise ConfigurationException(f"Invalid configuration: {e}")
