import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from ..acoustics.models import PhysicalConstants
from ..core.config import settings


class FractionalDelay(str, Enum):
    NEAREST_SAMPLE = "nearest_sample"
    WINDOWED_SINC = "windowed_sinc"


class ImageSourceConfig(BaseModel):
    speed_of_sound: float = Field(settings.speed_of_sound, gt=0)
    sample_rate: int = Field(settings.sample_rate, gt=0)
    rir_length: int = Field(settings.rir_length, gt=0)
    fractional_delay: FractionalDelay = FractionalDelay.WINDOWED_SINC
    sinc_taps: int = Field(81, ge=3)
    chunk_size: int = Field(16384, gt=0)

    model_config = {"frozen": True}

    @property
    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(c=self.speed_of_sound, fs=self.sample_rate, sabine_coeff=settings.sabine_coeff)

    @property
    def half_taps(self) -> int:
        return self.sinc_taps // 2

    @property
    def horizon_samples(self) -> int:
        """Latest delay, in samples, whose kernel still reaches into the window."""
        if self.fractional_delay == FractionalDelay.NEAREST_SAMPLE:
            return self.rir_length
        return self.rir_length + self.half_taps

    def max_order(self, dims) -> np.ndarray:
        """Per-axis lattice bound covering every image audible within the window."""
        reach = self.speed_of_sound * self.horizon_samples / self.sample_rate
        dims = np.asarray(dims, dtype=np.float64)
        return np.array([math.ceil(reach / (2.0 * length)) + 1 for length in dims], dtype=np.int64)
