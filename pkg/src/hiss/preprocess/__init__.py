from .filters import (FilterSpec, analog_magnitude, butterworth_lowpass, design_butterworth,
                      frequency_response)
from .frames import FrameCalib, imu_to_reference, quat_to_matrix
from .pipeline import (RESTING_WARMUP, NormStats, PreprocessConfig, append_diffs, denormalize,
                       fit_stats, normalize, preprocess_sensor, subtract_resting)
from .resample import RawChannelSeries, align_pair, grid, resample

__all__ = [
    "FilterSpec", "analog_magnitude", "butterworth_lowpass", "design_butterworth",
    "frequency_response", "FrameCalib", "imu_to_reference", "quat_to_matrix", "RESTING_WARMUP",
    "NormStats", "PreprocessConfig", "append_diffs", "denormalize", "fit_stats", "normalize",
    "preprocess_sensor", "subtract_resting", "RawChannelSeries", "align_pair", "grid", "resample",
]
