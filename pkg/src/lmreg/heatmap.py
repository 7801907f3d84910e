"""Heatmap decoding (soft and hard argmax), fixtures, and segmentation loss.

Grids are indexed ``[row, col]`` = ``[y, x]``; decoded points are ``(x, y)``.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .errors import InvalidArgumentError
from .io import atomic_write_bytes

NEG_INF = -1e9
DEFAULT_TEMPERATURE = 1.0

HMAP_MAGIC = b"HMAP"
HMAP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class Heatmap:
    """Logit grid of shape (H, W) for one landmark."""

    logits: np.ndarray
    landmark_id: int = 0

    def __post_init__(self):
        logits = _as_grid(self.logits)
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def shape(self):
        return self.logits.shape


def _as_grid(h, name="heatmap"):
    if isinstance(h, Heatmap):
        return h.logits
    grid = np.array(h, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D grid, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return grid


def _check_temperature(tau):
    tau = float(tau)
    if not tau > 0 or not np.isfinite(tau):
        raise InvalidArgumentError(f"temperature must be positive, got {tau}")
    return tau


def softmax2d(h, tau=DEFAULT_TEMPERATURE):
    """Temperature softmax over every cell of the grid (max-subtracted)."""
    grid = _as_grid(h)
    tau = _check_temperature(tau)
    z = (grid - grid.max()) / tau
    e = np.exp(z)
    return e / e.sum()


def soft_argmax(h, tau=DEFAULT_TEMPERATURE):
    """Expected ``(x, y)`` under ``softmax2d(h, tau)``; sub-pixel and differentiable."""
    p = softmax2d(h, tau)
    rows, cols = p.shape
    x = np.dot(p.sum(axis=0), np.arange(cols, dtype=np.float64))
    y = np.dot(p.sum(axis=1), np.arange(rows, dtype=np.float64))
    return np.array([x, y])


def soft_argmax_jacobian(h, tau=DEFAULT_TEMPERATURE):
    """Derivative of :func:`soft_argmax` w.r.t. each logit, shape (2, H, W).

    ``d x_hat / d h[y, x] = p[y, x] * (x - x_hat) / tau`` and likewise for y.
    """
    p = softmax2d(h, tau)
    x_hat, y_hat = soft_argmax(h, tau)
    rows, cols = p.shape
    xs = np.arange(cols, dtype=np.float64)[None, :]
    ys = np.arange(rows, dtype=np.float64)[:, None]
    return np.stack([p * (xs - x_hat), p * (ys - y_hat)]) / tau


def hard_argmax(h):
    """Integer ``(x, y)`` of the maximum; ties go to the lowest row-major index."""
    grid = _as_grid(h)
    row, col = np.unravel_index(int(np.argmax(grid)), grid.shape)
    return np.array([col, row], dtype=np.int64)


def gaussian_heatmap(center, sigma, size):
    """Log-Gaussian logits ``-((x-cx)^2 + (y-cy)^2) / (2 sigma^2)``.

    Parameters
    ----------
    center : (cx, cy)
    sigma : float
        Standard deviation in pixels.
    size : (W, H)
    """
    sigma = check_positive(sigma, "sigma")
    w, h = (int(s) for s in size)
    if w < 1 or h < 1:
        raise InvalidArgumentError(f"size must be positive, got {size}")
    cx, cy = (float(c) for c in center)
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    return -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2)


def bce_with_logits(h, target):
    """Mean binary cross-entropy between ``sigmoid(h)`` and ``target``.

    Uses ``max(x, 0) - x t + log1p(exp(-|x|))``, stable for any logit.
    """
    x = _as_grid(h)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != x.shape:
        raise InvalidArgumentError(f"target shape {t.shape} does not match heatmap {x.shape}")
    if np.any((t < 0) | (t > 1)) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError("target entries must lie in [0, 1]")
    loss = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    return float(loss.mean())


def decode(heatmaps, method="soft", tau=DEFAULT_TEMPERATURE):
    """Decode a stack of (N, H, W) logits to an (N, 2) array of ``(x, y)``."""
    stack = np.asarray(heatmaps, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3:
        raise InvalidArgumentError(f"expected (N, H, W) heatmaps, got shape {stack.shape}")
    if method == "soft":
        return np.array([soft_argmax(g, tau) for g in stack])
    if method == "hard":
        return np.array([hard_argmax(g) for g in stack], dtype=np.float64)
    raise InvalidArgumentError(f"unknown decoding method {method!r}")


def write_heatmaps(path, heatmaps):
    """Write an (N, H, W) stack in the little-endian ``HMAP`` v1 format."""
    stack = np.asarray(heatmaps, dtype="<f4")
    if stack.ndim != 3:
        raise InvalidArgumentError(f"expected (N, H, W) heatmaps, got shape {stack.shape}")
    count, h, w = stack.shape
    header = _HEADER.pack(HMAP_MAGIC, HMAP_VERSION, count, h, w)
    atomic_write_bytes(path, header + np.ascontiguousarray(stack).tobytes())


def read_heatmaps(path):
    """Read an ``HMAP`` file into a float64 array of shape (N, H, W)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic, version, count, h, w = _HEADER.unpack_from(raw)
    if magic != HMAP_MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    if version != HMAP_VERSION:
        raise InvalidArgumentError(f"{path}: unsupported version {version}")
    expected = count * h * w * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise InvalidArgumentError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(count, h, w)
    return data.astype(np.float64)
