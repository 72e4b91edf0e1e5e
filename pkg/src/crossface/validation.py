"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import os

import numpy as np

from .image import GrayImage, canonicalize


def resolve_threads(n_jobs) -> int:
    """Map ``n_jobs`` (None/0 = all cores, negative = cores + 1 + n_jobs) to a worker count."""
    cpus = os.cpu_count() or 1
    if n_jobs is None or n_jobs == 0:
        return cpus
    n_jobs = int(n_jobs)
    if n_jobs < 0:
        return max(1, cpus + 1 + n_jobs)
    return n_jobs


def check_pairs(X, window_w: int, window_h: int) -> np.ndarray:
    """Validate image pairs and return a ``(n, 2, window_h, window_w)`` float64 array.

    Accepts a 4-D array or a sequence of 2-tuples of GrayImage / 2-D arrays.
    Pairs not already at the window size are resized bilinearly.
    """
    if isinstance(X, np.ndarray) and X.ndim == 4:
        arr = np.asarray(X, dtype=np.float64)
        if arr.shape[1] != 2:
            raise ValueError(f"expected pairs along axis 1, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ValueError("no pairs given")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        if arr.shape[2:] == (window_h, window_w):
            return arr
        pairs = [(GrayImage(a), GrayImage(b)) for a, b in arr]
    else:
        pairs = []
        for item in X:
            if len(item) != 2:
                raise ValueError("each pair must hold exactly two images")
            pairs.append(tuple(im if isinstance(im, GrayImage) else GrayImage(im) for im in item))
        if not pairs:
            raise ValueError("no pairs given")
    out = np.empty((len(pairs), 2, window_h, window_w), dtype=np.float64)
    for i, (a, b) in enumerate(pairs):
        out[i, 0] = canonicalize(a, window_w, window_h).pixels
        out[i, 1] = canonicalize(b, window_w, window_h).pixels
    return out


def check_binary_labels(y) -> tuple[np.ndarray, np.ndarray]:
    """Return (classes, signed labels) where the larger class maps to +1."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"both classes are required, got {classes.size} distinct label(s)")
    signed = np.where(y == classes[1], 1, -1).astype(np.int8)
    return classes, signed
