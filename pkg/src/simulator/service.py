"""Image-source synthesis of shoebox room impulse responses."""
import itertools
from typing import Tuple

import numpy as np
from loguru import logger

from ..acoustics.geometry import surface_area, validate_pair, volume
from ..acoustics.models import WALL_COUNT, PhysicalConstants, Rir, RoomSpec, SourceReceiverPair
from ..core.exceptions import InfeasibleRT60Exception
from .schemas import FractionalDelay, ImageSourceConfig


def rt60_to_beta(dims, rt60: float, constants: PhysicalConstants = PhysicalConstants()) -> np.ndarray:
    """Invert Sabine's formula for one reflection coefficient shared by all six walls."""
    if not rt60 > 0:
        raise InfeasibleRT60Exception(f"RT60 must be positive, got {rt60}")
    absorption = constants.sabine_coeff * volume(dims) / (surface_area(dims) * rt60)
    if absorption >= 1.0:
        raise InfeasibleRT60Exception(
            f"RT60 {rt60:.3f} s is too short for room {np.asarray(dims).tolist()} "
            f"(average absorption {absorption:.3f} >= 1)"
        )
    return np.full(WALL_COUNT, np.sqrt(1.0 - absorption))


def sabine_rt60(dims, beta, constants: PhysicalConstants = PhysicalConstants()) -> float:
    """Sabine RT60 of a room whose walls have the given reflection coefficients."""
    lx, ly, lz = np.asarray(dims, dtype=np.float64)
    wall_areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    absorption = np.sum(wall_areas * (1.0 - np.asarray(beta, dtype=np.float64) ** 2)) / wall_areas.sum()
    if absorption <= 0:
        return float("inf")
    return constants.sabine_coeff * volume(dims) / (surface_area(dims) * absorption)


def fractional_delay_taps(delays: np.ndarray, cfg: ImageSourceConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Tap positions and weights placing a unit impulse at each (fractional) delay.

    Returns two (M, K) arrays; K is 1 for nearest_sample and sinc_taps for the
    Hann-windowed sinc.
    """
    delays = np.asarray(delays, dtype=np.float64).reshape(-1)
    if cfg.fractional_delay == FractionalDelay.NEAREST_SAMPLE:
        return np.rint(delays).astype(np.int64)[:, None], np.ones((delays.size, 1))

    half = cfg.half_taps
    offsets = np.arange(-half, half + 1, dtype=np.int64)
    positions = np.floor(delays).astype(np.int64)[:, None] + offsets[None, :]
    t = positions - delays[:, None]
    window = 0.5 * (1.0 + np.cos(np.pi * t / (half + 1)))
    return positions, window * np.sinc(t)


def _axis_images(source: float, receiver: float, length: float, beta_lo: float, beta_hi: float,
                 order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Receiver-relative image offsets and reflection factors along one axis."""
    n = np.arange(-order, order + 1, dtype=np.float64)
    offsets = np.concatenate([(source - receiver) + 2.0 * n * length,
                              2.0 * n * length - (source + receiver)])
    hits_lo = np.concatenate([np.abs(n), np.abs(n - 1.0)])
    hits_hi = np.concatenate([np.abs(n), np.abs(n)])
    factors = np.power(beta_lo, hits_lo) * np.power(beta_hi, hits_hi)
    return offsets, factors


def image_sources(room: RoomSpec, pair: SourceReceiverPair, cfg: ImageSourceConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Distances and amplitudes of every contributing image, in canonical order.

    The order (distance, then amplitude) depends only on the set of images, so
    swapping source and receiver or permuting the axes leaves the accumulation
    order, and therefore every output bit, unchanged.
    """
    orders = cfg.max_order(room.dims)
    axes = [
        _axis_images(pair.source[a], pair.receiver[a], room.dims[a], room.beta[2 * a], room.beta[2 * a + 1], orders[a])
        for a in range(3)
    ]
    (ox, fx), (oy, fy), (oz, fz) = axes
    sq = np.stack(np.broadcast_arrays(
        (ox ** 2)[:, None, None], (oy ** 2)[None, :, None], (oz ** 2)[None, None, :]
    ), axis=-1).reshape(-1, 3)
    sq.sort(axis=1)
    distance = np.sqrt((sq[:, 0] + sq[:, 1]) + sq[:, 2])

    fac = np.stack(np.broadcast_arrays(
        fx[:, None, None], fy[None, :, None], fz[None, None, :]
    ), axis=-1).reshape(-1, 3)
    fac.sort(axis=1)
    amplitude = (fac[:, 0] * fac[:, 1]) * fac[:, 2] / (4.0 * np.pi * distance)

    horizon = cfg.horizon_samples * cfg.speed_of_sound / cfg.sample_rate
    keep = (distance < horizon) & (amplitude > 0)
    distance, amplitude = distance[keep], amplitude[keep]
    order = np.lexsort((amplitude, distance))
    return distance[order], amplitude[order]


def simulate_rir(room: RoomSpec, pair: SourceReceiverPair, cfg: ImageSourceConfig = ImageSourceConfig()) -> Rir:
    validate_pair(room, pair)
    distance, amplitude = image_sources(room, pair, cfg)
    delays = distance / cfg.speed_of_sound * cfg.sample_rate

    samples = np.zeros(cfg.rir_length, dtype=np.float64)
    for start in range(0, delays.size, cfg.chunk_size):
        stop = start + cfg.chunk_size
        positions, weights = fractional_delay_taps(delays[start:stop], cfg)
        weights = weights * amplitude[start:stop, None]
        valid = (positions >= 0) & (positions < cfg.rir_length)
        samples += np.bincount(positions[valid], weights=weights[valid], minlength=cfg.rir_length)[:cfg.rir_length]

    logger.bind(dims=room.dims.tolist()).debug(f"Simulated RIR from {delays.size} images")
    return Rir(samples=samples, fs=cfg.sample_rate, room=room, pair=pair)


def simulate_rir_bruteforce(room: RoomSpec, pair: SourceReceiverPair,
                            cfg: ImageSourceConfig = ImageSourceConfig()) -> np.ndarray:
    """Direct per-image summation over the full lattice; slow, used as an oracle."""
    validate_pair(room, pair)
    orders = cfg.max_order(room.dims)
    samples = np.zeros(cfg.rir_length, dtype=np.float64)
    ranges = [range(-int(o), int(o) + 1) for o in orders]

    for nx, ny, nz in itertools.product(*ranges):
        for px, py, pz in itertools.product((0, 1), repeat=3):
            disp = []
            gain = 1.0
            for axis, (n, p) in enumerate(((nx, px), (ny, py), (nz, pz))):
                s, r, length = pair.source[axis], pair.receiver[axis], room.dims[axis]
                offset = (s - r) + 2.0 * n * length if p == 0 else 2.0 * n * length - (s + r)
                disp.append(offset)
                gain *= room.beta[2 * axis] ** abs(n - p) * room.beta[2 * axis + 1] ** abs(n)
            d = float(np.sqrt(disp[0] ** 2 + disp[1] ** 2 + disp[2] ** 2))
            if gain == 0.0 or d >= cfg.horizon_samples * cfg.speed_of_sound / cfg.sample_rate:
                continue
            positions, weights = fractional_delay_taps(np.array([d / cfg.speed_of_sound * cfg.sample_rate]), cfg)
            for pos, w in zip(positions[0], weights[0]):
                if 0 <= pos < cfg.rir_length:
                    samples[pos] += gain / (4.0 * np.pi * d) * w
    return samples
