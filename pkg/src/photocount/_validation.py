"""Input checks for the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvariantError


def check_detector_params(efficiency, dark_mean):
    if not 0.0 <= float(efficiency) <= 1.0:
        raise InvariantError(f"efficiency must lie in [0, 1], got {efficiency!r}")
    if not float(dark_mean) >= 0.0:
        raise InvariantError(f"dark_mean must be >= 0, got {dark_mean!r}")


def check_distributions(X, n_features: int | None = None, allow_negative=False) -> np.ndarray:
    """2-D float array of probability rows, one distribution per row."""
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise InvariantError(f"expected {n_features} photon-number bins, got {X.shape[1]}")
    if not allow_negative and np.any(X < 0):
        raise InvariantError("probabilities must be non-negative")
    return X


def check_histograms(X) -> np.ndarray:
    """2-D int64 array of count histograms, one per row."""
    X = check_array(X, dtype=None, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.dtype.kind == "f" and np.any(X != np.round(X)):
        raise InvariantError("histogram counts must be integers")
    X = X.astype(np.int64)
    if np.any(X < 0):
        raise InvariantError("histogram counts must be non-negative")
    return X
