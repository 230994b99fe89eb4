import math
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class DatasetMode(str, Enum):
    FIXED_BETA = "fixed_beta"
    VARYING_RT60 = "varying_rt60"

    @property
    def code(self) -> int:
        return 0 if self == DatasetMode.FIXED_BETA else 1

    @classmethod
    def from_code(cls, code: int) -> "DatasetMode":
        return cls.FIXED_BETA if code == 0 else cls.VARYING_RT60

    @classmethod
    def from_cli(cls, value: str) -> "DatasetMode":
        return {"fixed": cls.FIXED_BETA, "varying": cls.VARYING_RT60}.get(value) or cls(value)


class Placement(str, Enum):
    INDEPENDENT = "independent"
    GRID = "grid"


Range = Tuple[float, float]


class DatasetSpec(BaseModel):
    n_rooms: int = Field(..., ge=1)
    rirs_per_room: int = Field(16, ge=1)
    mode: DatasetMode = DatasetMode.VARYING_RT60
    placement: Placement = Placement.INDEPENDENT
    length_range: Range = (6.0, 10.0)
    width_range: Range = (5.0, 8.0)
    height_range: Range = (4.0, 6.0)
    rt60_range: Range = (0.4, 1.0)
    fixed_beta_range: Range = (0.7, 0.95)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    beta_seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    max_redraws: int = Field(100, ge=1)

    @field_validator("length_range", "width_range", "height_range", "rt60_range")
    @classmethod
    def validate_positive_range(cls, v: Range) -> Range:
        low, high = v
        if not (0 < low <= high):
            raise ValueError(f"range must be positive and ordered, got {v}")
        return v

    @field_validator("fixed_beta_range")
    @classmethod
    def validate_beta_range(cls, v: Range) -> Range:
        low, high = v
        if not (0 <= low <= high < 1):
            raise ValueError(f"reflection coefficient range must lie in [0, 1), got {v}")
        return v

    @model_validator(mode="after")
    def validate_grid(self) -> "DatasetSpec":
        if self.placement == Placement.GRID and math.isqrt(self.rirs_per_room) ** 2 != self.rirs_per_room:
            raise ValueError("grid placement needs a perfect-square rirs_per_room")
        return self

    @property
    def dim_ranges(self) -> Tuple[Range, Range, Range]:
        return self.length_range, self.width_range, self.height_range

    @property
    def record_count(self) -> int:
        return self.n_rooms * self.rirs_per_room

    @property
    def effective_beta_seed(self) -> int:
        return self.seed if self.beta_seed is None else self.beta_seed


class DatasetManifest(BaseModel):
    spec: Optional[Dict[str, Any]] = None
    generator: str
    checksum: str
    record_count: int
    rir_length: int
    sample_rate: int
    created_at: datetime = Field(default_factory=datetime.utcnow)
