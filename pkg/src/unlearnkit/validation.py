"""Input validation helpers shared across the package.

All public entry points normalize their inputs through these functions so
that shape and finiteness errors surface early with a clear message instead
of propagating NaNs through training or evaluation.
"""

import numpy as np

__all__ = ["as_features", "as_labels", "check_finite"]


def as_features(X, n_features=None, name="X"):
    """Coerce X to a 2D float64 array and check finiteness.

    A single feature vector is promoted to a one-row matrix. If
    ``n_features`` is given, the column count must match.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2D matrix, got ndim={X.ndim}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"{name} has {X.shape[1]} features, expected {n_features}"
        )
    check_finite(X, name=name)
    return X


def as_labels(y, n_classes=None, name="y"):
    """Coerce y to a 1D int64 array of class indices in [0, n_classes)."""
    y = np.asarray(y)
    if y.ndim == 0:
        y = y.reshape(1)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1D, got ndim={y.ndim}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ValueError(f"{name} must contain integer class indices")
        y = rounded
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError(f"{name} contains negative class indices")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(
            f"{name} contains label {int(y.max())} but only {n_classes} classes exist"
        )
    return y


def check_finite(arr, name="array"):
    """Raise ValueError if arr contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values (NaN or Inf)")
    return arr
