import numpy as np
from loguru import logger
from scipy import stats

from ..acoustics.models import Rir
from ..core.exceptions import InsufficientDecayException

FIT_START_DB = -5.0
FIT_END_DB = -25.0
MIN_FIT_SAMPLES = 10


def schroeder_decay_db(samples: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve, normalised to 0 dB at t=0."""
    energy = np.cumsum(np.asarray(samples, dtype=np.float64)[::-1] ** 2)[::-1]
    total = energy[0]
    if total <= 0:
        raise InsufficientDecayException("Impulse response is silent")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / total)


def measure_rt60(rir: Rir) -> float:
    """T20 estimate: fit the -5..-25 dB part of the Schroeder curve, extrapolate to -60 dB."""
    edc_db = schroeder_decay_db(rir.samples)
    segment = np.flatnonzero((edc_db <= FIT_START_DB) & (edc_db >= FIT_END_DB))
    if segment.size < MIN_FIT_SAMPLES or not np.any(edc_db < FIT_END_DB):
        raise InsufficientDecayException(
            f"Decay curve does not span {FIT_START_DB} to {FIT_END_DB} dB within {len(rir)} samples"
        )

    t = segment / rir.fs
    slope, intercept = stats.linregress(t, edc_db[segment])[0:2]
    if slope >= 0:
        raise InsufficientDecayException("Decay curve is not decreasing over the fit range")

    rt60 = -60.0 / slope
    logger.debug(f"Measured RT60 {rt60:.3f} s from {segment.size} samples")
    return float(rt60)
