import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger

from ..core.exceptions import ConfigurationException, DatasetFormatException, TrainingDivergedException
from ..core.queue import PrefetchQueue
from ..dataset.service import batches, split_and_shuffle
from ..dataset.storage import RirDataset
from ..nn.layers import Sequential, Tensor
from ..nn.loss import MSELoss, mse_per_dimension
from ..nn.optim import Adam
from .model import GeometryModel
from .schemas import EpochRecord, TrainConfig, TrainingHistory

State = Dict[str, Dict[str, Tensor]]


class EarlyStopping:
    """Stops after `patience` consecutive epochs without a new best validation loss."""

    def __init__(self, patience: int = 30):
        self.patience = patience
        self.best_valid = math.inf
        self.best_valid_epoch: Optional[int] = None
        self.best_state: Optional[State] = None
        self.wait = 0

    def __call__(self, model: Sequential, epoch: int, valid_loss: float) -> bool:
        """Record this epoch; True means training should stop now."""
        if valid_loss < self.best_valid:
            self.best_valid = valid_loss
            self.best_valid_epoch = epoch
            self.best_state = model.state_dict()
            self.wait = 0
            return False

        self.wait += 1
        if self.wait >= self.patience:
            logger.info(
                f"Early stopping at epoch {epoch}; best valid loss {self.best_valid:.6f} at epoch {self.best_valid_epoch}"
            )
            return True
        return False


@dataclass
class TrainResult:
    model: GeometryModel
    history: TrainingHistory


def epoch_seed(seed: int, epoch: int) -> int:
    return 0 if seed == 0 else seed + epoch


def validation_mse(model: Sequential, dataset: RirDataset, batch_size: int = 50) -> Tuple[float, np.ndarray]:
    """Scalar and per-dimension MSE over the whole set, in eval mode."""
    model.eval()
    squared = np.zeros(3)
    count = 0
    for x, y in batches(dataset, split_and_shuffle(dataset, 0), batch_size, drop_last=False):
        squared += mse_per_dimension(model.forward(x), y) * len(x)
        count += len(x)
    per_dim = squared / max(count, 1)
    return float(per_dim.sum()), per_dim


def _check_finite(value: float, epoch: int, what: str):
    if not np.isfinite(value):
        raise TrainingDivergedException(f"{what} became {value} at epoch {epoch}")


def train(train_set: RirDataset, val_set: RirDataset, cfg: TrainConfig = TrainConfig(),
          model: Optional[GeometryModel] = None) -> TrainResult:
    if len(train_set) == 0 or len(val_set) == 0:
        raise DatasetFormatException("Training and validation sets must be non-empty")
    if len(train_set) < cfg.batch_size:
        raise ConfigurationException(
            f"Training set has {len(train_set)} records, fewer than one batch of {cfg.batch_size}"
        )

    model = model or GeometryModel.build(cfg.seed)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return TrainResult(model=model, history=history)

    optimizer = Adam(model, lr=cfg.learning_rate, betas=cfg.betas, epsilon=cfg.epsilon)
    loss_fn = MSELoss()
    stopper = EarlyStopping(cfg.patience)

    logger.bind(epochs=cfg.epochs, batch_size=cfg.batch_size, patience=cfg.patience).info(
        f"Training on {len(train_set)} records, validating on {len(val_set)}"
    )

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        permutation = split_and_shuffle(train_set, epoch_seed(cfg.seed, epoch))
        total, seen = 0.0, 0
        for x, y in PrefetchQueue(batches(train_set, permutation, cfg.batch_size, drop_last=True),
                                  cfg.prefetch_depth):
            optimizer.zero_grad()
            loss, _ = loss_fn(model.forward(x), y)
            _check_finite(loss, epoch, "Training loss")
            model.backward(loss_fn.backward())
            optimizer.step()
            total += loss * len(x)
            seen += len(x)

        train_mse = total / seen
        val_mse, _ = validation_mse(model, val_set, cfg.batch_size)
        _check_finite(val_mse, epoch, "Validation loss")
        history.epochs.append(EpochRecord(epoch=epoch, train_mse=train_mse, val_mse=val_mse))
        logger.info(f"Epoch {epoch}: train_mse={train_mse:.6f} val_mse={val_mse:.6f}")

        history.stopped_epoch = epoch
        if stopper(model, epoch, val_mse):
            history.early_stopped = True
            break

    if stopper.best_state is not None:
        model.load_state_dict(stopper.best_state)
    history.best_epoch = stopper.best_valid_epoch
    history.best_val_mse = stopper.best_valid
    model.eval()
    return TrainResult(model=model, history=history)
