import time
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..acoustics.geometry import sample_grid_pairs
from ..acoustics.models import RoomSpec
from ..core.exceptions import GroupingException
from ..core.queue import run_ordered
from ..dataset.schemas import DatasetMode, DatasetSpec
from ..dataset.service import sample_room, split_and_shuffle
from ..dataset.storage import RirDataset
from ..estimator.model import GeometryModel
from ..estimator.service import estimate, estimate_batch
from ..simulator.schemas import ImageSourceConfig
from ..simulator.service import simulate_rir
from .schemas import BenchResult, EvalReport, Histogram, RoomAnalysis, RoomError

CANDIDATE_GROUP_SIZES: Tuple[int, ...] = (1, 4, 8, 16)
HISTOGRAM_BINS = 50
ESTIMATE_CHUNK = 1024
PAIR_STREAM = 1


def _vec(values: np.ndarray) -> List[float]:
    return [float(v) for v in values]


def squared_error_histogram(errors: np.ndarray, bins: int = HISTOGRAM_BINS) -> Histogram:
    """Squared errors of all three dimensions pooled into uniform bins over [0, max]."""
    squared = np.square(np.asarray(errors, dtype=np.float64)).reshape(-1)
    top = float(squared.max()) if squared.size else 0.0
    counts, edges = np.histogram(squared, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return Histogram(bin_edges=_vec(edges), counts=[int(c) for c in counts])


def error_statistics(errors: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mse, bias, variance) per dimension, population convention."""
    errors = np.asarray(errors, dtype=np.float64)
    bias = errors.mean(axis=0)
    variance = np.square(errors - bias).mean(axis=0)
    mse = np.square(errors).mean(axis=0)
    return mse, bias, variance


def room_counts(room_ids: np.ndarray) -> np.ndarray:
    _, counts = np.unique(room_ids, return_counts=True)
    return counts


def valid_group_sizes(room_ids: np.ndarray, candidates: Iterable[int] = CANDIDATE_GROUP_SIZES) -> List[int]:
    counts = room_counts(room_ids)
    smallest = int(counts.min()) if counts.size else 0
    return [n for n in candidates if n <= smallest]


def group_indices(room_ids: np.ndarray, group_size: int) -> np.ndarray:
    """(groups, group_size) record indices; rooms in id order, records in estimate order.

    A room with R records yields R // group_size groups and drops the rest.
    """
    room_ids = np.asarray(room_ids)
    if group_size < 1:
        raise GroupingException(f"Group size must be >= 1, got {group_size}")
    counts = room_counts(room_ids)
    if counts.size == 0:
        raise GroupingException("No estimates to group")
    if group_size > counts.min():
        raise GroupingException(
            f"Group size {group_size} exceeds the smallest room ({int(counts.min())} RIRs); "
            f"valid sizes: {valid_group_sizes(room_ids)}"
        )

    groups = []
    for room in np.unique(room_ids):
        members = np.flatnonzero(room_ids == room)
        usable = len(members) - len(members) % group_size
        groups.append(members[:usable].reshape(-1, group_size))
    return np.concatenate(groups, axis=0)


def evaluate_estimates(estimates: np.ndarray, labels: np.ndarray, room_ids: np.ndarray, group_size: int,
                       dims: Optional[np.ndarray] = None, sort_outputs: bool = False) -> EvalReport:
    """Average estimates group_size at a time within each room and score the group means."""
    estimates = np.asarray(estimates, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if sort_outputs:
        estimates = np.sort(estimates, axis=1)
    dims = labels if dims is None else np.asarray(dims, dtype=np.float64)

    idx = group_indices(room_ids, group_size)
    member_errors = estimates[idx] - labels[idx]
    group_errors = member_errors.mean(axis=1)

    # bias over the member errors so it does not depend on group_size
    bias = member_errors.reshape(-1, 3).mean(axis=0)
    centered = member_errors - bias
    variance = np.square(group_errors - bias).mean(axis=0)
    mse = np.square(group_errors).mean(axis=0)
    rmse = np.sqrt(mse)

    n_groups = idx.shape[0]
    single_variance = np.square(centered).reshape(-1, 3).mean(axis=0)
    sums = centered.sum(axis=1)
    squares = np.square(centered).sum(axis=1)
    covariance = (np.square(sums) - squares).sum(axis=0) / (group_size ** 2 * n_groups)

    per_room = []
    group_rooms = np.asarray(room_ids)[idx[:, 0]]
    for room in np.unique(group_rooms):
        mine = group_errors[group_rooms == room]
        per_room.append(RoomError(
            dims=_vec(dims[idx[group_rooms == room][0, 0]]),
            count=int(mine.shape[0]),
            mean_error=_vec(mine.mean(axis=0)),
            std_error=_vec(mine.std(axis=0)),
        ))

    return EvalReport(
        group_size=group_size,
        output="sorted" if sort_outputs else "raw",
        n_groups=n_groups,
        n_estimates=int(idx.size),
        mse=_vec(mse),
        bias=_vec(bias),
        variance=_vec(variance),
        median_abs=_vec(np.median(np.abs(group_errors), axis=0)),
        rmse=_vec(rmse),
        average_error=float(rmse.mean()),
        variance_independent=_vec(single_variance / group_size),
        covariance_term=_vec(covariance),
        error_histogram=squared_error_histogram(group_errors),
        per_room=per_room,
    )


@dataclass
class DatasetEstimates:
    """Per-RIR estimates of a dataset in the order they were computed."""

    estimates: np.ndarray
    labels: np.ndarray
    dims: np.ndarray
    room_ids: np.ndarray


def estimate_dataset(model: GeometryModel, dataset: RirDataset, seed: int = 0,
                     chunk_size: int = ESTIMATE_CHUNK) -> DatasetEstimates:
    order = split_and_shuffle(dataset, seed)
    outputs = []
    for start in range(0, len(order), chunk_size):
        chunk = order[start:start + chunk_size]
        outputs.append(estimate_batch(model, dataset.samples[chunk]))
    estimates = np.concatenate(outputs, axis=0) if outputs else np.zeros((0, 3))
    return DatasetEstimates(
        estimates=estimates,
        labels=dataset.labels[order],
        dims=dataset.dims[order],
        room_ids=dataset.room_ids()[order],
    )


def evaluate(model: GeometryModel, dataset: RirDataset, group_size: int = 1, seed: int = 0,
             sort_outputs: bool = False) -> EvalReport:
    computed = estimate_dataset(model, dataset, seed)
    return evaluate_estimates(computed.estimates, computed.labels, computed.room_ids, group_size,
                              dims=computed.dims, sort_outputs=sort_outputs)


def evaluate_suite(model: GeometryModel, dataset: RirDataset, group_sizes: Sequence[int] = CANDIDATE_GROUP_SIZES,
                   seed: int = 0, outputs: Sequence[bool] = (False, True)) -> List[EvalReport]:
    """One report per (group size, raw/sorted output), estimating every RIR only once."""
    computed = estimate_dataset(model, dataset, seed)
    reports = []
    for group_size in group_sizes:
        for sort_outputs in outputs:
            report = evaluate_estimates(computed.estimates, computed.labels, computed.room_ids, group_size,
                                        dims=computed.dims, sort_outputs=sort_outputs)
            logger.info(
                f"N={group_size} ({report.output}): mse={report.mse} median_abs={report.median_abs}"
            )
            reports.append(report)
    return reports


def constant_baseline_mse(train_labels: np.ndarray, test_labels: np.ndarray) -> np.ndarray:
    """Per-dimension MSE of always predicting the training-set mean label."""
    mean = np.asarray(train_labels, dtype=np.float64).mean(axis=0)
    return np.square(np.asarray(test_labels, dtype=np.float64) - mean).mean(axis=0)


def sample_analysis_rooms(n_rooms: int = 8, seed: int = 0, spec: Optional[DatasetSpec] = None) -> List[RoomSpec]:
    """Varying-RT60 rooms drawn the same way the dataset generator draws them."""
    spec = spec or DatasetSpec(n_rooms=n_rooms, mode=DatasetMode.VARYING_RT60, seed=seed)
    return [sample_room(np.random.default_rng([seed, i]), spec) for i in range(n_rooms)]


@dataclass(frozen=True)
class AnalysisTask:
    room: RoomSpec
    room_index: int
    seed: int
    n_sources: int
    n_receivers: int
    cfg: ImageSourceConfig


def simulate_analysis_room(task: AnalysisTask) -> np.ndarray:
    rng = np.random.default_rng([task.seed, task.room_index, PAIR_STREAM])
    pairs = sample_grid_pairs(rng, task.room, task.n_sources, task.n_receivers)
    return np.stack([simulate_rir(task.room, pair, task.cfg).samples for pair in pairs])


def per_room_analysis(model: GeometryModel, rooms: Sequence[RoomSpec], n_sources: int = 10,
                      n_receivers: int = 10, seed: int = 0, cfg: ImageSourceConfig = ImageSourceConfig(),
                      workers: Optional[int] = None) -> List[RoomAnalysis]:
    """Single-RIR error statistics of every source/receiver combination in each room."""
    tasks = (
        AnalysisTask(room=room, room_index=i, seed=seed, n_sources=n_sources, n_receivers=n_receivers, cfg=cfg)
        for i, room in enumerate(rooms)
    )
    results = []
    for room, samples in zip(rooms, run_ordered(simulate_analysis_room, tasks, workers)):
        errors = estimate_batch(model, samples) - room.label
        mse, bias, _ = error_statistics(errors)
        results.append(RoomAnalysis(
            dims=_vec(room.dims),
            rt60_target=room.rt60_target,
            n_rirs=int(errors.shape[0]),
            mean_error=_vec(bias),
            std_error=_vec(errors.std(axis=0)),
            mse=_vec(mse),
            error_histogram=squared_error_histogram(errors),
        ))
        logger.info(f"Analysed room {room.dims.tolist()}: mean error {results[-1].mean_error}")
    return results


def runtime_bench(model: GeometryModel, iters: int = 3000, rir: Optional[np.ndarray] = None, seed: int = 0,
                  batch_sizes: Sequence[int] = (1, 10, 50), warmup: int = 10) -> BenchResult:
    """Wall-clock seconds per single-RIR estimate; the input is prepared before timing starts."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    if rir is None:
        rir = rng.standard_normal(model.input_length) * 0.01
    model.eval()

    for _ in range(warmup):
        estimate(model, rir)

    timings = np.empty(iters)
    for i in range(iters):
        start = time.perf_counter()
        estimate(model, rir)
        timings[i] = time.perf_counter() - start

    throughput = []
    for batch_size in batch_sizes:
        batch = rng.standard_normal((batch_size, model.input_length)) * 0.01
        reps = max(1, min(100, iters // batch_size))
        start = time.perf_counter()
        for _ in range(reps):
            estimate_batch(model, batch)
        per_batch = (time.perf_counter() - start) / reps
        throughput.append([float(batch_size), per_batch, batch_size / per_batch])

    result = BenchResult(
        iters=iters,
        mean_s=float(timings.mean()),
        median_s=float(np.median(timings)),
        p99_s=float(np.percentile(timings, 99)),
        batch_throughput=throughput,
    )
    logger.info(f"Estimate latency over {iters} runs: mean {result.mean_s:.3e}s, p99 {result.p99_s:.3e}s")
    return result
