import pytest
from loguru import logger
from pydantic import ValidationError

from src.core.config import RunConfig, load_run_config
from src.core.exceptions import (
    EXIT_RUNTIME,
    EXIT_USAGE,
    ConfigurationException,
    DatasetFormatException,
    GroupingException,
    handle_command_exception,
)
from src.core.queue import PrefetchQueue, TaskStatus, run_ordered
from src.dataset.schemas import DatasetSpec


def _square(x: int) -> int:
    return x * x


def _failing_producer():
    yield 1
    yield 2
    raise RuntimeError("producer broke")


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.patience, cfg.learning_rate) == (2000, 50, 30, 0.001)
        assert cfg.group_sizes == [1, 4, 8, 16]
        assert cfg.bench_iters == 3000

    def test_flag_beats_file_beats_default(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('rooms = 10\nepochs = 5\nmode = "fixed"\n')
        cfg = load_run_config(path, {"epochs": 7, "rooms": None})
        assert cfg.rooms == 10
        assert cfg.epochs == 7
        assert cfg.mode == "fixed"
        assert cfg.patience == 30

    def test_environment_is_below_the_file(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RGE_RUN_PATIENCE", "12")
        monkeypatch.setenv("RGE_RUN_EPOCHS", "9")
        path = tmp_path / "run.toml"
        path.write_text("epochs = 3\n")
        cfg = load_run_config(path)
        assert cfg.patience == 12
        assert cfg.epochs == 3

    def test_unknown_key_is_a_configuration_error(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("room_count = 3\n")
        with pytest.raises(ConfigurationException) as exc_info:
            load_run_config(path)
        assert exc_info.value.exit_code == EXIT_USAGE

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigurationException):
            load_run_config(tmp_path / "absent.toml")
        bad = tmp_path / "bad.toml"
        bad.write_text("rooms = = 3")
        with pytest.raises(ConfigurationException):
            load_run_config(bad)

    @pytest.mark.parametrize("override", [{"mode": "sometimes"}, {"rooms": 0}, {"placement": "random"}])
    def test_invalid_values(self, override):
        with pytest.raises(ConfigurationException):
            load_run_config(None, override)


class TestExceptionHandling:
    def test_domain_errors_carry_their_exit_code(self):
        assert handle_command_exception(GroupingException("no"), "run", "eval") == EXIT_RUNTIME
        assert handle_command_exception(ConfigurationException("no"), "run", "eval") == EXIT_USAGE

    def test_validation_errors_are_usage_errors(self):
        with pytest.raises(ValidationError) as exc_info:
            DatasetSpec(n_rooms=0)
        assert handle_command_exception(exc_info.value, "run", "gen") == EXIT_USAGE

    def test_braces_in_details_are_logged_verbatim(self):
        records = []
        sink = logger.add(lambda message: records.append(message.record), level="ERROR")
        try:
            code = handle_command_exception(DatasetFormatException("cannot open /data/{split}.rird"), "run", "info")
        finally:
            logger.remove(sink)
        assert code == EXIT_RUNTIME
        assert records[0]["message"] == "Command failed: cannot open /data/{split}.rird"
        assert records[0]["extra"]["error_code"] == "DATASET_FORMAT"
        assert records[0]["extra"]["run_id"] == "run"

    def test_unexpected_errors_are_runtime_failures(self):
        assert handle_command_exception(RuntimeError("boom"), "run", "gen") == EXIT_RUNTIME
        assert handle_command_exception(FileNotFoundError("gone"), "run", "gen") == EXIT_RUNTIME


class TestQueue:
    def test_run_ordered_serial(self):
        assert list(run_ordered(_square, range(6), workers=1)) == [0, 1, 4, 9, 16, 25]

    def test_run_ordered_pool_keeps_submission_order(self):
        assert list(run_ordered(_square, range(20), workers=2)) == [x * x for x in range(20)]

    @pytest.mark.parametrize("depth", [1, 3, 16])
    def test_prefetch_preserves_order(self, depth):
        queue = PrefetchQueue(iter(range(50)), depth)
        assert list(queue) == list(range(50))
        assert queue.status == TaskStatus.COMPLETED

    def test_prefetch_reraises_producer_errors(self):
        queue = PrefetchQueue(_failing_producer(), 2)
        seen = []
        with pytest.raises(RuntimeError, match="producer broke"):
            for item in queue:
                seen.append(item)
        assert seen == [1, 2]
        assert queue.status == TaskStatus.FAILED

    def test_early_exit_stops_the_producer(self):
        queue = PrefetchQueue(iter(range(1000)), 2)
        for item in queue:
            if item == 3:
                break
        assert queue.status in (TaskStatus.RUNNING, TaskStatus.COMPLETED)
