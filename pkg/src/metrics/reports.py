"""CSV report files written under a report directory.

report_mse.csv              group_size, output, dimension, mse, bias, variance, median_abs, rmse,
                            variance_independent, covariance_term, n_groups
report_hist.csv             group_size, output, bin_low, bin_high, count
report_rooms.csv            group_size, output, length, width, height, count,
                            mean_err_x, mean_err_y, mean_err_z, std_x, std_y, std_z
loss_history.csv            epoch, train_mse, val_mse
report_rooms_analysis.csv   room, length, width, height, rt60_target, n_rirs,
                            mean_err_x, mean_err_y, mean_err_z, std_x, std_y, std_z, mse_x, mse_y, mse_z
report_rooms_hist.csv       room, bin_low, bin_high, count
report_bench.csv            iters, mean_s, median_s, p99_s
report_acceptance.csv       check, value, threshold, passed
report_modes.csv            mode, then the report_mse.csv columns

Dimensions are named after the ascending label: x is the smallest room
dimension (height in practice), z the largest (length).
"""
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence, Union

import pandas as pd
from loguru import logger

from ..estimator.schemas import TrainingHistory
from .schemas import BenchResult, EvalReport, Histogram, RoomAnalysis

PathLike = Union[str, Path]

MSE_REPORT = "report_mse.csv"
HIST_REPORT = "report_hist.csv"
ROOMS_REPORT = "report_rooms.csv"
LOSS_HISTORY = "loss_history.csv"
ROOMS_ANALYSIS_REPORT = "report_rooms_analysis.csv"
ROOMS_HIST_REPORT = "report_rooms_hist.csv"
BENCH_REPORT = "report_bench.csv"
ACCEPTANCE_REPORT = "report_acceptance.csv"
MODES_REPORT = "report_modes.csv"

DIMENSIONS = ("x", "y", "z")


def _write(frame: pd.DataFrame, directory: PathLike, filename: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / filename
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def _histogram_rows(histogram: Histogram) -> List[dict]:
    edges = histogram.bin_edges
    return [
        {"bin_low": edges[i], "bin_high": edges[i + 1], "count": count}
        for i, count in enumerate(histogram.counts)
    ]


def _xyz(prefix: str, values: Sequence[float]) -> dict:
    return {f"{prefix}_{d}": v for d, v in zip(DIMENSIONS, values)}


def mse_frame(reports: Iterable[EvalReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for i, dimension in enumerate(DIMENSIONS):
            rows.append({
                "group_size": report.group_size,
                "output": report.output,
                "dimension": dimension,
                "mse": report.mse[i],
                "bias": report.bias[i],
                "variance": report.variance[i],
                "median_abs": report.median_abs[i],
                "rmse": report.rmse[i],
                "variance_independent": report.variance_independent[i],
                "covariance_term": report.covariance_term[i],
                "n_groups": report.n_groups,
            })
    return pd.DataFrame(rows)


def write_eval_reports(reports: Sequence[EvalReport], directory: PathLike) -> List[Path]:
    hist_rows, room_rows = [], []
    for report in reports:
        key = {"group_size": report.group_size, "output": report.output}
        hist_rows += [{**key, **row} for row in _histogram_rows(report.error_histogram)]
        for room in report.per_room:
            length, width, height = room.dims
            room_rows.append({
                **key, "length": length, "width": width, "height": height, "count": room.count,
                **_xyz("mean_err", room.mean_error), **_xyz("std", room.std_error),
            })

    return [
        _write(mse_frame(reports), directory, MSE_REPORT),
        _write(pd.DataFrame(hist_rows), directory, HIST_REPORT),
        _write(pd.DataFrame(room_rows), directory, ROOMS_REPORT),
    ]


def write_loss_history(history: TrainingHistory, directory: PathLike) -> Path:
    frame = pd.DataFrame(
        [record.model_dump() for record in history.epochs],
        columns=["epoch", "train_mse", "val_mse"],
    )
    return _write(frame, directory, LOSS_HISTORY)


def write_room_analysis(analyses: Sequence[RoomAnalysis], directory: PathLike) -> List[Path]:
    rows, hist_rows = [], []
    for index, analysis in enumerate(analyses):
        length, width, height = analysis.dims
        rows.append({
            "room": index, "length": length, "width": width, "height": height,
            "rt60_target": analysis.rt60_target, "n_rirs": analysis.n_rirs,
            **_xyz("mean_err", analysis.mean_error), **_xyz("std", analysis.std_error), **_xyz("mse", analysis.mse),
        })
        hist_rows += [{"room": index, **row} for row in _histogram_rows(analysis.error_histogram)]
    return [
        _write(pd.DataFrame(rows), directory, ROOMS_ANALYSIS_REPORT),
        _write(pd.DataFrame(hist_rows), directory, ROOMS_HIST_REPORT),
    ]


def write_bench(result: BenchResult, directory: PathLike) -> Path:
    frame = pd.DataFrame([result.model_dump(exclude={"batch_throughput"})])
    return _write(frame, directory, BENCH_REPORT)


def write_acceptance(rows: Sequence[dict], directory: PathLike) -> Path:
    frame = pd.DataFrame(list(rows), columns=["check", "value", "threshold", "passed"])
    return _write(frame, directory, ACCEPTANCE_REPORT)


def write_mode_comparison(by_mode: Mapping[str, Sequence[EvalReport]], directory: PathLike) -> Path:
    """The report_mse.csv rows of each reflection-coefficient mode, side by side."""
    frames = [mse_frame(report_list).assign(mode=mode) for mode, report_list in by_mode.items()]
    frame = pd.concat(frames, ignore_index=True)
    frame = frame[["mode"] + [c for c in frame.columns if c != "mode"]]
    return _write(frame, directory, MODES_REPORT)
