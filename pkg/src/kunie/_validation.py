"""Input checks shared by the functional API and the estimators."""
from __future__ import annotations

import numpy as np


def check_image(image, name: str = "image") -> np.ndarray:
    """Return ``image`` as a C-contiguous uint8 array of shape (M, N) or (M, N, C).

    C must be 1 or 3.  Integer inputs outside 0..255 and non-integer inputs
    are rejected rather than silently wrapped.
    """
    arr = np.asarray(image)
    if arr.ndim not in (2, 3):
        raise ValueError(f"{name} must be 2D (gray) or 3D (color), got shape {arr.shape}")
    if arr.ndim == 3 and arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {arr.shape[2]}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise TypeError(f"{name} must hold integer samples, got {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"{name} samples must lie in 0..255")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def image_planes(arr: np.ndarray):
    """Split a checked image into its 2D channel planes."""
    if arr.ndim == 2:
        return [arr]
    return [arr[:, :, c] for c in range(arr.shape[2])]


def check_bytes(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} must hold bytes")
        arr = arr.astype(np.uint8)
    return arr


def check_bits(bits, min_length: int = 0, name: str = "bits") -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError(f"{name} must contain only 0 and 1")
    if arr.size < min_length:
        raise ValueError(f"{name}: need at least {min_length} bits, got {arr.size}")
    return arr
