from typing import List, Sequence, Tuple

import numpy as np

from ..core.exceptions import InvalidGeometryException
from .models import PhysicalConstants, RoomSpec, SourceReceiverPair

WALL_MARGIN = 0.5
MIN_SEPARATION = 0.3
MAX_PLACEMENT_ATTEMPTS = 1000
ONSET_THRESHOLD = 1e-12


def _positive_dims(dims) -> np.ndarray:
    dims = np.asarray(dims, dtype=np.float64).reshape(-1)
    if dims.shape != (3,):
        raise InvalidGeometryException(f"Expected 3 room dimensions, got shape {dims.shape}")
    if not np.all(np.isfinite(dims)) or np.any(dims <= 0):
        raise InvalidGeometryException(f"Room dimensions must be strictly positive, got {dims.tolist()}")
    return dims


def sort_ascending(dims) -> np.ndarray:
    return np.sort(_positive_dims(dims))


def surface_area(dims) -> float:
    lx, ly, lz = _positive_dims(dims)
    return float(2.0 * (lx * ly + lx * lz + ly * lz))


def volume(dims) -> float:
    lx, ly, lz = _positive_dims(dims)
    return float(lx * ly * lz)


def sample_dims(rng: np.random.Generator, ranges: Sequence[Tuple[float, float]]) -> np.ndarray:
    """Draw each axis independently and uniformly from its (low, high) range."""
    lows = np.array([r[0] for r in ranges], dtype=np.float64)
    highs = np.array([r[1] for r in ranges], dtype=np.float64)
    return rng.uniform(lows, highs)


def sample_point(rng: np.random.Generator, dims: np.ndarray, margin: float = WALL_MARGIN) -> np.ndarray:
    dims = _positive_dims(dims)
    if np.any(dims <= 2 * margin):
        raise InvalidGeometryException(f"Room {dims.tolist()} leaves no interior with {margin} m wall clearance")
    return rng.uniform(margin, dims - margin)


def _sample_separated(rng: np.random.Generator, dims: np.ndarray, others: List[np.ndarray],
                      min_separation: float) -> np.ndarray:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        point = sample_point(rng, dims)
        if all(np.linalg.norm(point - o) >= min_separation for o in others):
            return point
    raise InvalidGeometryException(
        f"Could not place a point {min_separation} m away from {len(others)} others in room {dims.tolist()}"
    )


def sample_pair(rng: np.random.Generator, room: RoomSpec,
                min_separation: float = MIN_SEPARATION) -> SourceReceiverPair:
    source = sample_point(rng, room.dims)
    receiver = _sample_separated(rng, room.dims, [source], min_separation)
    return SourceReceiverPair(source=source, receiver=receiver)


def sample_grid_pairs(rng: np.random.Generator, room: RoomSpec, n_sources: int, n_receivers: int,
                      min_separation: float = MIN_SEPARATION) -> List[SourceReceiverPair]:
    """All source/receiver combinations of freshly drawn source and receiver sets."""
    sources = [sample_point(rng, room.dims) for _ in range(n_sources)]
    receivers = [_sample_separated(rng, room.dims, sources, min_separation) for _ in range(n_receivers)]
    return [SourceReceiverPair(source=s, receiver=r) for s in sources for r in receivers]


def validate_pair(room: RoomSpec, pair: SourceReceiverPair, margin: float = 0.0):
    if not room.contains(pair.source, margin) or not room.contains(pair.receiver, margin):
        raise InvalidGeometryException(
            f"Source {pair.source.tolist()} or receiver {pair.receiver.tolist()} outside room {room.dims.tolist()}"
        )
    if pair.distance <= 0.0:
        raise InvalidGeometryException("Source and receiver coincide")


def direct_delay_samples(pair: SourceReceiverPair, constants: PhysicalConstants = PhysicalConstants()) -> float:
    return pair.distance / constants.c * constants.fs


def first_arrival_index(samples: np.ndarray, threshold: float = ONSET_THRESHOLD) -> int:
    """Index of the first sample whose magnitude exceeds threshold, or -1 if none does."""
    above = np.flatnonzero(np.abs(samples) > threshold)
    return int(above[0]) if above.size else -1
