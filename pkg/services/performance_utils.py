from typing import Sequence

import numpy as np


def safe_div(numerator: float, denominator: float, default: float = 0.0) -> float:
    """Rate or mean over a possibly empty set of frames/matches; default instead of NaN when nothing was counted."""
    if denominator == 0:
        return default
    return numerator / denominator


def rmse(errors: Sequence[float]) -> float:
    """Root mean square of error magnitudes; 0.0 for no samples."""
    arr = np.asarray(errors, dtype=np.float64)
    return float(np.sqrt(safe_div(float(np.sum(arr * arr)), arr.size)))


def mae(errors: Sequence[float]) -> float:
    """Mean absolute error; 0.0 for no samples."""
    arr = np.asarray(errors, dtype=np.float64)
    return safe_div(float(np.sum(np.abs(arr))), arr.size)
