"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DataError, ParameterError


def check_samples(X, name="X", min_samples=1):
    """Return ``X`` as a finite float64 array of shape (n_samples, n_features)."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=False,
                        ensure_min_samples=min_samples)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains NaN or infinite entries")
    return X


def check_query(x, n_features, name="x"):
    """Validate a single point or a batch of points.

    Returns the 2-D batch and a flag telling whether the input was 1-D, so
    callers can hand back results in the shape they were given.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != n_features:
        raise DataError(
            f"{name} has shape {x.shape}, expected (..., {n_features})")
    if not np.all(np.isfinite(x2)):
        raise DataError(f"{name} contains NaN or infinite entries")
    return x2, single


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_positive_int(value, name, allow_zero=False):
    if not isinstance(value, numbers.Integral) or value < (0 if allow_zero else 1):
        bound = "non-negative" if allow_zero else "positive"
        raise ParameterError(f"{name} must be a {bound} integer, got {value!r}")
    return int(value)


def check_metric_scales(scales, n_features):
    """Per-coordinate divisors used inside squared distances; ``None`` means unit."""
    if scales is None:
        return np.ones(n_features)
    scales = np.asarray(scales, dtype=np.float64)
    if scales.ndim == 0:
        scales = np.full(n_features, float(scales))
    if scales.shape != (n_features,):
        raise ParameterError(
            f"metric_scales has shape {scales.shape}, expected ({n_features},)")
    if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
        raise ParameterError("metric_scales must be strictly positive and finite")
    return scales
