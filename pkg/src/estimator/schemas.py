from typing import List, Optional, Tuple

from pydantic import BaseModel, Field

from ..core.config import settings


class TrainConfig(BaseModel):
    epochs: int = Field(2000, ge=0)
    batch_size: int = Field(50, ge=1)
    patience: int = Field(30, ge=1)
    learning_rate: float = Field(0.001, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = Field(1e-8, gt=0)
    seed: int = Field(1, ge=0)
    prefetch_depth: int = Field(settings.prefetch_depth, ge=1)


class EpochRecord(BaseModel):
    epoch: int
    train_mse: float
    val_mse: float


class TrainingHistory(BaseModel):
    epochs: List[EpochRecord] = []
    best_epoch: Optional[int] = None
    best_val_mse: Optional[float] = None
    stopped_epoch: Optional[int] = None
    early_stopped: bool = False
