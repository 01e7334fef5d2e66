"""Input validation helpers shared by the estimators and the pure functions."""
import math

import numpy as np


def check_durations(values, *, name="durations", allow_negative=True):
    """Coerce ``values`` to a 1-d float array of finite numbers.

    Accepts lists, tuples, numpy arrays, a single column ``(n, 1)`` array
    (so estimators can sit in a sklearn pipeline) or a ``MeasurementSet``.
    """
    durations = getattr(values, "durations", None)
    if durations is not None:
        values = durations
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    if not allow_negative and np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    return arr


def check_positive(value, name, *, strict=True, allow_inf=False):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_int_range(value, name, low, high=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < low or (high is not None and value > high):
        span = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ValueError(f"{name} must be in {span}, got {value}")
    return int(value)
