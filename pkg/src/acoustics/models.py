from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core.config import settings
from ..core.exceptions import InvalidGeometryException

WALL_COUNT = 6


def _frozen_vector(values, size: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape != (size,):
        raise InvalidGeometryException(f"{name} must have {size} components, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = settings.speed_of_sound
    fs: int = settings.sample_rate
    sabine_coeff: float = settings.sabine_coeff


@dataclass(frozen=True, eq=False)
class RoomSpec:
    """One simulated shoebox room.

    dims keeps the sampled (Lx, Ly, Lz) order; label is the same triple sorted
    ascending, which is what the network regresses. beta is ordered
    (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz).
    """

    dims: np.ndarray
    beta: np.ndarray
    rt60_target: Optional[float] = None
    label: np.ndarray = field(init=False)

    def __post_init__(self):
        dims = _frozen_vector(self.dims, 3, "dims")
        if not np.all(np.isfinite(dims)) or np.any(dims <= 0):
            raise InvalidGeometryException(f"Room dimensions must be strictly positive, got {dims.tolist()}")
        beta = _frozen_vector(self.beta, WALL_COUNT, "beta")
        if np.any(beta < 0) or np.any(beta >= 1):
            raise InvalidGeometryException(f"Reflection coefficients must lie in [0, 1), got {beta.tolist()}")
        label = np.sort(dims)
        label.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "label", label)

    @classmethod
    def uniform(cls, dims, beta: float, rt60_target: Optional[float] = None) -> "RoomSpec":
        return cls(dims=dims, beta=np.full(WALL_COUNT, beta), rt60_target=rt60_target)

    def contains(self, point: np.ndarray, margin: float = 0.0) -> bool:
        point = np.asarray(point, dtype=np.float64)
        return bool(np.all(point >= margin) and np.all(point <= self.dims - margin))


@dataclass(frozen=True, eq=False)
class SourceReceiverPair:
    source: np.ndarray
    receiver: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "source", _frozen_vector(self.source, 3, "source"))
        object.__setattr__(self, "receiver", _frozen_vector(self.receiver, 3, "receiver"))

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.source - self.receiver))

    def swapped(self) -> "SourceReceiverPair":
        return SourceReceiverPair(source=self.receiver, receiver=self.source)


@dataclass(frozen=True, eq=False)
class Rir:
    samples: np.ndarray
    fs: int
    room: RoomSpec
    pair: SourceReceiverPair

    def __len__(self) -> int:
        return int(self.samples.shape[0])
