"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np


def check_image(img, name="image", min_side=2):
    """Return ``img`` as a finite 2D float64 array with sides >= ``min_side``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if min(arr.shape) < min_side:
        raise ValueError(f"{name} sides must be >= {min_side}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_volume(vol, name="volume"):
    arr = np.asarray(vol, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3D (S, H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def check_scalar(value, name, min_val=None, max_val=None, strict=False):
    """Validate a real scalar against optional bounds and return it as float."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if min_val is not None:
        if strict and value <= min_val:
            raise ValueError(f"{name} must be > {min_val}, got {value}")
        if not strict and value < min_val:
            raise ValueError(f"{name} must be >= {min_val}, got {value}")
    if max_val is not None and value > max_val:
        raise ValueError(f"{name} must be <= {max_val}, got {value}")
    return value


def check_count(value, name, min_val=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < min_val:
        raise ValueError(f"{name} must be >= {min_val}, got {value}")
    return int(value)
