from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import LayerStateException, ShapeException
from .layers import Tensor


def mse_per_dimension(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean over the batch of squared error, one value per output dimension."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape or prediction.ndim != 2:
        raise ShapeException(f"MSE needs matching (n, d) arrays, got {prediction.shape} and {target.shape}")
    return np.mean((prediction - target) ** 2, axis=0)


class MSELoss:
    """Per-dimension MSE summed into the scalar training loss."""

    def __init__(self):
        self._diff: Optional[Tensor] = None

    def forward(self, prediction: Tensor, target: Tensor) -> Tuple[float, Tensor]:
        per_dim = mse_per_dimension(prediction, target)
        self._diff = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
        return float(per_dim.sum()), per_dim

    __call__ = forward

    def backward(self) -> Tensor:
        if self._diff is None:
            raise LayerStateException("MSELoss.backward called before forward")
        return 2.0 * self._diff / self._diff.shape[0]
