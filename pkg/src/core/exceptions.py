from datetime import datetime
from typing import Optional

from loguru import logger
from pydantic import ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class RoomGeometryException(Exception):
    def __init__(self, detail: str, error_code: Optional[str] = None, exit_code: int = EXIT_RUNTIME):
        super().__init__(detail)
        self.detail = detail
        self.error_code = error_code
        self.exit_code = exit_code


class InvalidGeometryException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "INVALID_GEOMETRY")


class InfeasibleRT60Exception(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "INFEASIBLE_RT60")


class InsufficientDecayException(RoomGeometryException):
    def __init__(self, detail: str = "Decay range not reached within the window"):
        super().__init__(detail, "INSUFFICIENT_DECAY")


class GenerationException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "GENERATION_FAILED")


class DatasetFormatException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "DATASET_FORMAT")


class WeightFormatException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "WEIGHT_FORMAT")


class ShapeException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "SHAPE_MISMATCH")


class LayerStateException(RoomGeometryException):
    def __init__(self, detail: str = "backward called before forward"):
        super().__init__(detail, "LAYER_STATE")


class DegenerateBatchException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "DEGENERATE_BATCH")


class TrainingDivergedException(RoomGeometryException):
    def __init__(self, detail: str = "Training loss became NaN"):
        super().__init__(detail, "TRAINING_DIVERGED")


class GroupingException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "GROUPING_ERROR")


class ConfigurationException(RoomGeometryException):
    def __init__(self, detail: str):
        super().__init__(detail, "CONFIGURATION_ERROR", EXIT_USAGE)


def handle_command_exception(exc: BaseException, run_id: str, command: str) -> int:
    """Log a failed command and return the process exit code."""
    log = logger.bind(run_id=run_id, command=command)

    if isinstance(exc, RoomGeometryException):
        log.bind(
            error_code=exc.error_code,
            exit_code=exc.exit_code,
            timestamp=datetime.utcnow().isoformat()
        ).error("Command failed: {}", exc.detail)
        return exc.exit_code

    if isinstance(exc, ValidationError):
        log.bind(error_code="VALIDATION_ERROR").error("Invalid parameters: {}", exc)
        return EXIT_USAGE

    if isinstance(exc, OSError):
        log.bind(error_code="IO_ERROR").error("I/O failure: {}", exc)
        return EXIT_RUNTIME

    log.bind(
        exception_type=type(exc).__name__,
        error_code="INTERNAL_ERROR"
    ).error("Unhandled exception: {}", exc)
    return EXIT_RUNTIME
