"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError, InsufficientDataError


def check_series(X, y=None, min_rows=1, n_features=None):
    """Validate a (T, D) sensor series and an optional length-T target.

    Returns float64 arrays. Raises the package's dimension / insufficient-data
    errors rather than sklearn's generic ``ValueError`` where it matters.
    """
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionError(f"X has {X.shape[1]} sensors, estimator was fitted with {n_features}")
    if X.shape[0] < min_rows:
        raise InsufficientDataError(f"need at least {min_rows} rows, got {X.shape[0]}")
    if y is None:
        return X
    y = check_array(y, dtype=np.float64, ensure_2d=False, ensure_all_finite=True).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    return X, y


def windowed_target(y, window):
    """Targets aligned with :func:`sthcss.data.make_windows` at stride 1."""
    return np.asarray(y, dtype=np.float64)[window - 1:]
