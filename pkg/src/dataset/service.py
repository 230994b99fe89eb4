import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np
from loguru import logger

from ..acoustics.geometry import sample_dims, sample_grid_pairs, sample_pair
from ..acoustics.models import WALL_COUNT, RoomSpec
from ..core.exceptions import GenerationException, InfeasibleRT60Exception
from ..core.queue import run_ordered
from ..simulator.schemas import ImageSourceConfig
from ..simulator.service import rt60_to_beta, simulate_rir
from .schemas import DatasetMode, DatasetSpec, Placement
from .storage import PathLike, RirDataset, make_header, read_dataset, record_dtype, write_manifest

FIXED_BETA_STREAM = 2 ** 32 - 1
PROGRESS_EVERY = 100


def fixed_beta(spec: DatasetSpec) -> np.ndarray:
    """The single reflection-coefficient vector shared by every room of a fixed-mode dataset."""
    rng = np.random.default_rng([spec.effective_beta_seed, FIXED_BETA_STREAM])
    low, high = spec.fixed_beta_range
    return rng.uniform(low, high, size=WALL_COUNT)


def sample_room(rng: np.random.Generator, spec: DatasetSpec, beta: Optional[np.ndarray] = None) -> RoomSpec:
    if spec.mode == DatasetMode.FIXED_BETA:
        return RoomSpec(dims=sample_dims(rng, spec.dim_ranges), beta=beta)

    for attempt in range(spec.max_redraws):
        dims = sample_dims(rng, spec.dim_ranges)
        rt60 = float(rng.uniform(*spec.rt60_range))
        try:
            return RoomSpec(dims=dims, beta=rt60_to_beta(dims, rt60), rt60_target=rt60)
        except InfeasibleRT60Exception as e:
            logger.debug(f"Redrawing room after infeasible RT60 (attempt {attempt + 1}): {e.detail}")
    raise GenerationException(f"No feasible RT60 after {spec.max_redraws} redraws")


@dataclass(frozen=True)
class RoomTask:
    spec: DatasetSpec
    room_index: int
    beta: Optional[Tuple[float, ...]]
    cfg: ImageSourceConfig


def generate_room(task: RoomTask) -> np.ndarray:
    """All records of one room; a pure function of (spec, room index, cfg)."""
    spec = task.spec
    rng = np.random.default_rng([spec.seed, task.room_index])
    beta = None if task.beta is None else np.array(task.beta)
    room = sample_room(rng, spec, beta)

    if spec.placement == Placement.GRID:
        side = math.isqrt(spec.rirs_per_room)
        pairs = sample_grid_pairs(rng, room, side, side)
    else:
        pairs = [sample_pair(rng, room) for _ in range(spec.rirs_per_room)]

    records = np.zeros(len(pairs), dtype=record_dtype(task.cfg.rir_length))
    for i, pair in enumerate(pairs):
        rir = simulate_rir(room, pair, task.cfg)
        if not np.any(rir.samples.astype(np.float32)):
            raise GenerationException(f"Room {task.room_index} produced an all-zero RIR")
        records[i]["dims"] = room.dims
        records[i]["label"] = room.label
        records[i]["beta"] = room.beta
        records[i]["rt60_target"] = np.nan if room.rt60_target is None else room.rt60_target
        records[i]["source"] = pair.source
        records[i]["receiver"] = pair.receiver
        records[i]["samples"] = rir.samples
    return records


def generate(spec: DatasetSpec, path: PathLike, cfg: ImageSourceConfig = ImageSourceConfig(),
             workers: Optional[int] = None) -> RirDataset:
    """Simulate the whole corpus described by spec and write it to path, ordered by room index."""
    path = Path(path)
    beta = tuple(fixed_beta(spec).tolist()) if spec.mode == DatasetMode.FIXED_BETA else None
    tasks = (RoomTask(spec=spec, room_index=i, beta=beta, cfg=cfg) for i in range(spec.n_rooms))

    logger.bind(seed=spec.seed, path=str(path)).info(
        f"Generating {spec.n_rooms} rooms x {spec.rirs_per_room} RIRs ({spec.mode.value})"
    )
    partial = path.with_name(path.name + ".part")
    written = 0
    try:
        with open(partial, "wb") as f:
            make_header(cfg.sample_rate, cfg.rir_length, spec.record_count, spec.mode).tofile(f)
            for room_index, records in enumerate(run_ordered(generate_room, tasks, workers)):
                records.tofile(f)
                written += len(records)
                if (room_index + 1) % PROGRESS_EVERY == 0:
                    logger.info(f"Generated {room_index + 1}/{spec.n_rooms} rooms")

        if written != spec.record_count:
            raise GenerationException(f"Wrote {written} records, expected {spec.record_count}")
    except BaseException:
        partial.unlink(missing_ok=True)
        raise
    partial.replace(path)

    dataset = read_dataset(path)
    write_manifest(path, dataset, spec)
    return dataset


def split_and_shuffle(dataset: RirDataset, seed: int) -> np.ndarray:
    """Record order for one pass; seed 0 means the file's own order."""
    if seed == 0:
        return np.arange(len(dataset), dtype=np.int64)
    return np.random.default_rng(seed).permutation(len(dataset))


def batches(dataset: RirDataset, permutation: np.ndarray, batch_size: int = 50,
            drop_last: bool = True) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (raw samples, ascending labels) batches in permutation order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(permutation)
    stop = n - n % batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        chunk = dataset.records[permutation[start:start + batch_size]]
        yield np.asarray(chunk["samples"], dtype=np.float64), np.asarray(chunk["label"], dtype=np.float64)
