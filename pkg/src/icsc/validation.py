"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_finite(a, name: str, dtype=float) -> np.ndarray:
    a = np.asarray(a, dtype=dtype)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def check_csi_batch(X, n_tones: int) -> np.ndarray:
    """(n, n_tones, 2) float array from one sample or a batch; rejects bad shapes and NaN/inf."""
    X = check_finite(X, "CSI samples")
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (n_tones, 2):
        raise ValueError(f"expected samples shaped (n, {n_tones}, 2), got {X.shape}")
    return X


def check_snapshots(snapshots, times=None, tones=None):
    """(T, K) complex snapshot matrix plus matching times (T,) and tone indices (K,)."""
    H = np.atleast_2d(check_finite(snapshots, "snapshots", complex))
    if H.ndim != 2:
        raise ValueError(f"snapshots must be 2-D (T, K), got {H.shape}")
    n_t, n_k = H.shape
    times = np.zeros(n_t) if times is None else check_finite(times, "times")
    if tones is None:
        tones = np.arange(-26, 27)[np.arange(-26, 27) != 0]
    tones = np.asarray(tones)
    if times.shape != (n_t,) or tones.shape != (n_k,):
        raise ValueError("times/tones do not match the snapshot matrix")
    return H, times, tones


def check_labels(y, n_samples: int, min_classes: int = 2) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ValueError(f"expected {n_samples} labels, got shape {y.shape}")
    n_classes = np.unique(y).size
    if n_classes < min_classes:
        raise ValueError(f"degenerate dataset: need {min_classes} classes, found {n_classes}")
    return y
