import numpy as np

from .errors import InvalidArgumentError


def as_points(points, dim, name="points", min_count=1):
    """Return ``points`` as a finite float64 array of shape (N, dim)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == dim:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidArgumentError(f"{name} must have shape (N, {dim}), got {arr.shape}")
    if arr.shape[0] < min_count:
        raise InvalidArgumentError(f"{name} needs at least {min_count} point(s), got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def as_vector(value, size, name="vector"):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (size,):
        raise InvalidArgumentError(f"{name} must have {size} components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be a positive finite number, got {value}")
    return value


def frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr
