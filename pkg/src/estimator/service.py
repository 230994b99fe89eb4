from typing import Sequence, Union

import numpy as np

from ..core.exceptions import GroupingException, ShapeException
from .model import GeometryModel


def _as_batch(model: GeometryModel, rirs) -> np.ndarray:
    batch = np.asarray(rirs, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != model.input_length:
        raise ShapeException(f"Expected RIRs of {model.input_length} samples, got array of shape {batch.shape}")
    return batch


def estimate_batch(model: GeometryModel, rirs) -> np.ndarray:
    """Raw network outputs for k RIRs; row i equals estimate(model, rirs[i]) bit for bit."""
    if model.training:
        model.eval()
    return model.forward(_as_batch(model, rirs))


def estimate(model: GeometryModel, rir: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """Room dimensions from one RIR, as the network emits them (not re-sorted)."""
    rir = np.asarray(rir, dtype=np.float64)
    if rir.ndim != 1:
        raise ShapeException(f"estimate takes a single RIR, got shape {rir.shape}")
    return estimate_batch(model, rir)[0]


def estimate_averaged(model: GeometryModel, rirs) -> np.ndarray:
    """Mean of the per-RIR estimates of N responses from the same room."""
    batch = np.asarray(rirs, dtype=np.float64)
    if batch.size == 0:
        raise GroupingException("estimate_averaged needs at least one RIR")
    return estimate_batch(model, batch).mean(axis=0)
