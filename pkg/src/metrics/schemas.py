from typing import List, Optional

from pydantic import BaseModel, ConfigDict

Vector3 = List[float]


class Histogram(BaseModel):
    bin_edges: List[float]
    counts: List[int]


class RoomError(BaseModel):
    dims: Vector3
    count: int
    mean_error: Vector3
    std_error: Vector3


class EvalReport(BaseModel):
    """Error statistics of grouped estimates against the true (sorted) room dimensions.

    Errors are estimate minus truth, so a positive bias means the estimate is
    too large. Variances use the population (1/n) convention, which makes
    mse == bias**2 + variance hold per dimension.
    """

    model_config = ConfigDict(frozen=True)

    group_size: int
    output: str = "raw"
    n_groups: int
    n_estimates: int
    mse: Vector3
    bias: Vector3
    variance: Vector3
    median_abs: Vector3
    rmse: Vector3
    average_error: float
    variance_independent: Vector3
    covariance_term: Vector3
    error_histogram: Histogram
    per_room: List[RoomError]


class RoomAnalysis(BaseModel):
    dims: Vector3
    rt60_target: Optional[float] = None
    n_rirs: int
    mean_error: Vector3
    std_error: Vector3
    mse: Vector3
    error_histogram: Histogram


class BenchResult(BaseModel):
    iters: int
    mean_s: float
    median_s: float
    p99_s: float
    batch_throughput: List[List[float]] = []
