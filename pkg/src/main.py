"""Command-line entry point: ``python -m src.main <command> [flags]``."""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .core.config import RunConfig, load_run_config, settings
from .core.exceptions import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, DatasetFormatException, GroupingException
from .core.middleware import command_middleware
from .dataset.schemas import DatasetMode, DatasetSpec, Placement
from .dataset.service import generate
from .dataset.storage import file_checksum, is_dataset_file, read_dataset, read_manifest, read_raw_rir
from .estimator.model import GeometryModel
from .estimator.schemas import TrainConfig
from .estimator.service import estimate_batch
from .estimator.trainer import train
from .metrics import reports
from .metrics.schemas import EvalReport
from .metrics.service import (
    constant_baseline_mse,
    evaluate_suite,
    per_room_analysis,
    runtime_bench,
    sample_analysis_rooms,
    valid_group_sizes,
)
from .nn.layers import count_parameters
from .nn.serialization import load_weights, save_weights
from .simulator.schemas import FractionalDelay, ImageSourceConfig

FULL_SCALE_ROOMS = 21000
FULL_SCALE_RIRS = 16
FULL_SCALE_GRID = 100
LATENCY_LIMIT_S = 0.010
VARIANCE_SLACK = 1.05


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the usage exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging(level: Optional[str] = None):
    logger.remove()
    logger.add(
        sys.stderr,
        level=(level or settings.log_level).upper(),
        format=settings.log_format,
        colorize=False,
    )


def _run_config(args: argparse.Namespace, **overrides: Any) -> RunConfig:
    return load_run_config(args.config, overrides)


def _simulator_config(args: argparse.Namespace) -> ImageSourceConfig:
    return ImageSourceConfig(fractional_delay=FractionalDelay(args.fractional_delay))


def _dataset_spec(cfg: RunConfig, n_rooms: int, seed: int, beta_seed: Optional[int]) -> DatasetSpec:
    return DatasetSpec(
        n_rooms=n_rooms,
        rirs_per_room=cfg.rirs_per_room,
        mode=DatasetMode.from_cli(cfg.mode),
        placement=Placement(cfg.placement),
        length_range=cfg.length_range,
        width_range=cfg.width_range,
        height_range=cfg.height_range,
        rt60_range=cfg.rt60_range,
        seed=seed,
        beta_seed=beta_seed,
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        patience=cfg.patience,
        learning_rate=cfg.learning_rate,
        betas=cfg.betas,
        seed=cfg.train_seed,
    )


def _load_model(path: Path) -> GeometryModel:
    model = load_weights(GeometryModel.build(0), path)
    model.eval()
    return model


def _format_vector(values: Sequence[float]) -> str:
    return " ".join(f"{v:.4f}" for v in values)


@command_middleware("gen")
def cmd_gen(args: argparse.Namespace) -> int:
    if args.full_scale:
        args.rooms = args.rooms or FULL_SCALE_ROOMS
        args.rirs_per_room = args.rirs_per_room or FULL_SCALE_RIRS
    cfg = _run_config(args, rooms=args.rooms, rirs_per_room=args.rirs_per_room, mode=args.mode,
                      placement=args.placement, seed=args.seed)
    spec = _dataset_spec(cfg, cfg.rooms, cfg.seed, args.beta_seed)
    dataset = generate(spec, args.out, _simulator_config(args), workers=args.workers)
    print(f"{args.out}: {len(dataset)} records, sha256 {file_checksum(args.out)}")
    return EXIT_OK


@command_middleware("train")
def cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args, epochs=args.epochs, patience=args.patience, batch_size=args.batch_size,
                      learning_rate=args.lr, train_seed=args.seed)
    train_set = read_dataset(args.train)
    val_set = read_dataset(args.val)

    result = train(train_set, val_set, _train_config(cfg))
    save_weights(result.model, args.out)
    report_dir = args.report or Path(args.out).parent
    reports.write_loss_history(result.history, report_dir)

    history = result.history
    print(f"stopped at epoch {history.stopped_epoch} (early stop: {history.early_stopped}); "
          f"best val MSE {history.best_val_mse} at epoch {history.best_epoch}")
    return EXIT_OK


@command_middleware("eval")
def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    model = _load_model(args.model)
    dataset = read_dataset(args.data)
    room_ids = dataset.room_ids()

    if args.group_size:
        group_sizes = args.group_size
    else:
        available = valid_group_sizes(room_ids, cfg.group_sizes)
        if not available:
            raise GroupingException(f"None of the group sizes {cfg.group_sizes} fit the rooms in {args.data}")
        group_sizes = available

    report_list = evaluate_suite(model, dataset, group_sizes, seed=args.seed)
    reports.write_eval_reports(report_list, args.report)

    for report in report_list:
        print(f"N={report.group_size:<3} {report.output:<6} mse [{_format_vector(report.mse)}] "
              f"bias [{_format_vector(report.bias)}] median_abs [{_format_vector(report.median_abs)}]")
    if args.train:
        baseline = constant_baseline_mse(read_dataset(args.train).labels, dataset.labels)
        print(f"constant-predictor mse [{_format_vector(baseline)}]")
    return EXIT_OK


@command_middleware("estimate")
def cmd_estimate(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    if not Path(args.rir).exists():
        raise DatasetFormatException(f"RIR file not found: {args.rir}")
    if is_dataset_file(args.rir):
        rirs = np.asarray(read_dataset(args.rir).samples, dtype=np.float64)
    else:
        rirs = read_raw_rir(args.rir, model.input_length)[None, :]
    if len(rirs) == 0:
        raise DatasetFormatException(f"{args.rir} holds no records")

    for row in estimate_batch(model, rirs):
        print(_format_vector(row))
    return EXIT_OK


@command_middleware("bench")
def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _run_config(args, bench_iters=args.iters)
    model = _load_model(args.model)
    result = runtime_bench(model, iters=cfg.bench_iters)
    if args.report:
        reports.write_bench(result, args.report)

    print(f"mean {result.mean_s:.3e} s  median {result.median_s:.3e} s  p99 {result.p99_s:.3e} s "
          f"over {result.iters} estimates")
    for batch_size, per_batch, rate in result.batch_throughput:
        print(f"batch {int(batch_size):>3}: {per_batch:.3e} s/batch, {rate:.0f} RIRs/s")
    return EXIT_OK


@command_middleware("per-room")
def cmd_per_room(args: argparse.Namespace) -> int:
    if args.full_scale:
        args.sources = args.sources or FULL_SCALE_GRID
        args.receivers = args.receivers or FULL_SCALE_GRID
    cfg = _run_config(args, analysis_rooms=args.rooms, analysis_sources=args.sources,
                      analysis_receivers=args.receivers, seed=args.seed)
    model = _load_model(args.model)
    rooms = sample_analysis_rooms(cfg.analysis_rooms, cfg.seed)
    analyses = per_room_analysis(model, rooms, cfg.analysis_sources, cfg.analysis_receivers, seed=cfg.seed,
                                 cfg=_simulator_config(args), workers=args.workers)
    reports.write_room_analysis(analyses, args.report)

    for analysis in analyses:
        print(f"room [{_format_vector(analysis.dims)}] mean error [{_format_vector(analysis.mean_error)}] "
              f"std [{_format_vector(analysis.std_error)}]")
    return EXIT_OK


@command_middleware("info")
def cmd_info(args: argparse.Namespace) -> int:
    dataset = read_dataset(args.data)
    print(f"path          {args.data}")
    print(f"mode          {dataset.mode.value}")
    print(f"sample rate   {dataset.fs} Hz")
    print(f"rir length    {dataset.rir_len}")
    print(f"records       {len(dataset)}")
    print(f"rooms         {dataset.room_count}")
    if len(dataset):
        print(f"group sizes   {valid_group_sizes(dataset.room_ids())}")

    manifest = read_manifest(args.data)
    if manifest is None:
        print("manifest      none")
        return EXIT_OK
    checksum_ok = manifest.checksum == file_checksum(args.data)
    print(f"generator     {manifest.generator}")
    print(f"checksum      {'ok' if checksum_ok else 'MISMATCH'}")
    return EXIT_OK if checksum_ok else EXIT_RUNTIME


def _desk_experiment(cfg: RunConfig, out: Path, sim_cfg: ImageSourceConfig,
                     workers: Optional[int]) -> Tuple[List[Dict[str, Any]], List[EvalReport]]:
    """One gen/train/eval/bench pass in out; returns the acceptance rows and the evaluation reports."""
    out.mkdir(parents=True, exist_ok=True)
    splits = {"train": cfg.rooms, "val": cfg.val_rooms, "test": cfg.test_rooms}
    datasets = {}
    for offset, (name, n_rooms) in enumerate(splits.items()):
        spec = _dataset_spec(cfg, n_rooms, cfg.seed + offset, beta_seed=cfg.seed)
        datasets[name] = generate(spec, out / f"{name}.rird", sim_cfg, workers=workers)

    result = train(datasets["train"], datasets["val"], _train_config(cfg))
    save_weights(result.model, out / "model.rgwt")
    reports.write_loss_history(result.history, out)
    logger.info(f"Model has {count_parameters(result.model)} trainable parameters")

    # the acceptance bounds are stated against single estimates
    candidates = sorted({1, *cfg.group_sizes})
    group_sizes = valid_group_sizes(datasets["test"].room_ids(), candidates)
    report_list = evaluate_suite(result.model, datasets["test"], group_sizes)
    reports.write_eval_reports(report_list, out)
    raw = {r.group_size: r for r in report_list if r.output == "raw"}

    baseline = constant_baseline_mse(datasets["train"].labels, datasets["test"].labels)
    bench = runtime_bench(result.model, iters=cfg.bench_iters)
    reports.write_bench(bench, out)

    rows: List[Dict[str, Any]] = []
    for i, dimension in enumerate(reports.DIMENSIONS):
        ratio = raw[1].mse[i] / baseline[i]
        rows.append({"check": f"mse_vs_constant_{dimension}", "value": ratio, "threshold": 0.5,
                     "passed": ratio <= 0.5})
    if 4 in raw:
        for i, dimension in enumerate(reports.DIMENSIONS):
            ratio = raw[4].variance[i] / raw[1].variance[i]
            rows.append({"check": f"variance_n4_vs_n1_{dimension}", "value": ratio, "threshold": VARIANCE_SLACK,
                         "passed": ratio <= VARIANCE_SLACK})
    rows.append({"check": "latency_mean_s", "value": bench.mean_s, "threshold": LATENCY_LIMIT_S,
                 "passed": bench.mean_s < LATENCY_LIMIT_S})
    reports.write_acceptance(rows, out)
    return rows, report_list


@command_middleware("repro-desk")
def cmd_repro_desk(args: argparse.Namespace) -> int:
    """Generate, train, evaluate and benchmark at desk scale, then check the acceptance bounds.

    With --mode both the experiment runs once per reflection-coefficient mode,
    each in its own subdirectory, and report_modes.csv compares them.
    """
    cfg = _run_config(args, seed=args.seed, epochs=args.epochs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim_cfg = _simulator_config(args)

    mode = args.mode or cfg.mode
    if mode != "both":
        rows, _ = _desk_experiment(cfg.model_copy(update={"mode": mode}), out, sim_cfg, args.workers)
    else:
        rows, by_mode = [], {}
        for name in ("fixed", "varying"):
            mode_rows, report_list = _desk_experiment(cfg.model_copy(update={"mode": name}), out / name,
                                                      sim_cfg, args.workers)
            rows.extend({**row, "check": f"{name}_{row['check']}"} for row in mode_rows)
            by_mode[name] = report_list
        reports.write_mode_comparison(by_mode, out)

    for row in rows:
        print(f"{row['check']:<32} {row['value']:.4g} (<= {row['threshold']}) {'PASS' if row['passed'] else 'FAIL'}")
    return EXIT_OK if all(row["passed"] for row in rows) else EXIT_RUNTIME


def _common_parser() -> argparse.ArgumentParser:
    common = CommandParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML run configuration file")
    common.add_argument("--log-level", default=None, help=f"Log level (default {settings.log_level})")
    return common


def _simulator_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--fractional-delay", choices=[d.value for d in FractionalDelay],
                        default=FractionalDelay.WINDOWED_SINC.value, help="Fractional-delay rendering")
    parser.add_argument("--workers", type=int, default=None,
                        help=f"Simulation worker processes (default {settings.workers})")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(prog="rge", description=f"{settings.app_name} {settings.version}")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = sub.add_parser("gen", parents=[common], help="Simulate a dataset file")
    gen.add_argument("--rooms", type=int, default=None, help="Number of rooms")
    gen.add_argument("--rirs-per-room", type=int, default=None, help="RIRs simulated per room")
    gen.add_argument("--mode", choices=["fixed", "varying"], default=None, help="Reflection-coefficient mode")
    gen.add_argument("--placement", choices=[p.value for p in Placement], default=None,
                     help="Independent pairs or a sources x receivers grid")
    gen.add_argument("--seed", type=int, default=None, help="Master seed")
    gen.add_argument("--beta-seed", type=int, default=None,
                     help="Seed of the shared fixed-mode coefficients (default: --seed)")
    gen.add_argument("--full-scale", action="store_true", help="21000 rooms x 16 RIRs unless overridden")
    gen.add_argument("--out", type=Path, required=True, help="Output dataset path")
    _simulator_flags(gen)
    gen.set_defaults(handler=cmd_gen)

    tr = sub.add_parser("train", parents=[common], help="Train the estimator")
    tr.add_argument("--train", type=Path, required=True, help="Training dataset")
    tr.add_argument("--val", type=Path, required=True, help="Validation dataset")
    tr.add_argument("--epochs", type=int, default=None, help="Maximum epochs (default 2000)")
    tr.add_argument("--patience", type=int, default=None, help="Early-stopping patience (default 30)")
    tr.add_argument("--batch-size", type=int, default=None, help="Mini-batch size (default 50)")
    tr.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 0.001)")
    tr.add_argument("--seed", type=int, default=None, help="Initialisation and shuffling seed")
    tr.add_argument("--out", type=Path, required=True, help="Output weight file")
    tr.add_argument("--report", type=Path, default=None, help="Directory for loss_history.csv")
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", parents=[common], help="Evaluate a model on a dataset")
    ev.add_argument("--model", type=Path, required=True, help="Weight file")
    ev.add_argument("--data", type=Path, required=True, help="Test dataset")
    ev.add_argument("--group-size", type=int, action="append", default=None,
                    help="Estimates averaged per room; repeatable (default: every valid size of 1, 4, 8, 16)")
    ev.add_argument("--seed", type=int, default=0, help="Estimate order seed (0 keeps file order)")
    ev.add_argument("--train", type=Path, default=None, help="Training set for the constant-predictor baseline")
    ev.add_argument("--report", type=Path, required=True, help="Report directory")
    ev.set_defaults(handler=cmd_eval)

    es = sub.add_parser("estimate", parents=[common], help="Estimate room dimensions from RIR files")
    es.add_argument("--model", type=Path, required=True, help="Weight file")
    es.add_argument("--rir", type=Path, required=True, help="Dataset file or raw little-endian f32 samples")
    es.set_defaults(handler=cmd_estimate)

    be = sub.add_parser("bench", parents=[common], help="Time single-RIR estimates")
    be.add_argument("--model", type=Path, required=True, help="Weight file")
    be.add_argument("--iters", type=int, default=None, help="Timed estimates (default 3000)")
    be.add_argument("--report", type=Path, default=None, help="Directory for report_bench.csv")
    be.set_defaults(handler=cmd_bench)

    pr = sub.add_parser("per-room", parents=[common], help="Error distribution within sampled rooms")
    pr.add_argument("--model", type=Path, required=True, help="Weight file")
    pr.add_argument("--rooms", type=int, default=None, help="Rooms to analyse (default 8)")
    pr.add_argument("--sources", type=int, default=None, help="Sources per room (default 10)")
    pr.add_argument("--receivers", type=int, default=None, help="Receivers per room (default 10)")
    pr.add_argument("--seed", type=int, default=None, help="Room and placement seed")
    pr.add_argument("--full-scale", action="store_true", help="100 sources x 100 receivers unless overridden")
    pr.add_argument("--report", type=Path, required=True, help="Report directory")
    _simulator_flags(pr)
    pr.set_defaults(handler=cmd_per_room)

    info = sub.add_parser("info", parents=[common], help="Describe a dataset file")
    info.add_argument("--data", type=Path, required=True, help="Dataset file")
    info.set_defaults(handler=cmd_info)

    rd = sub.add_parser("repro-desk", parents=[common], help="Desk-scale gen, train, eval and acceptance checks")
    rd.add_argument("--out", type=Path, required=True, help="Output directory")
    rd.add_argument("--seed", type=int, default=None, help="Master seed")
    rd.add_argument("--epochs", type=int, default=None, help="Maximum epochs")
    rd.add_argument("--mode", choices=["fixed", "varying", "both"], default=None,
                    help="Reflection-coefficient mode; both runs the two and compares them")
    _simulator_flags(rd)
    rd.set_defaults(handler=cmd_repro_desk)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
