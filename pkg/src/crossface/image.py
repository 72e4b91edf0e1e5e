"""Grayscale image ingestion, resizing and summed-area tables."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image, UnidentifiedImageError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Pillow modes holding 8-bit samples; anything else is rejected as an unsupported depth.
_GRAY_MODES = {"L", "1"}
_COLOR_MODES = {"RGB", "RGBA", "P", "LA"}


class ImageFormatError(ValueError):
    """Raised when an image file cannot be decoded into a GrayImage."""


class Rect(NamedTuple):
    """Axis-aligned box with top-left corner ``(x, y)`` and extent ``(w, h)``."""

    x: int
    y: int
    w: int
    h: int

    def fits(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.w >= 1
            and self.h >= 1
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale raster with intensities in [0, 1].

    ``pixels`` is a read-only float64 array of shape ``(height, width)``,
    indexed ``pixels[y, x]``.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D pixel array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"GrayImage(width={self.width}, height={self.height})"


def load_image(path: str | os.PathLike) -> GrayImage:
    """Read a binary PGM or PNG file as a GrayImage.

    8-bit gray rasters are scaled by 1/255. Color rasters are reduced with
    fixed luma weights (0.299, 0.587, 0.114) before scaling; alpha is ignored.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ImageFormatError
        If the file is malformed, has an unsupported bit depth or zero size.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in ("PPM", "PNG"):
                raise ImageFormatError(f"unsupported format {im.format!r} in {path}; expected PGM or PNG")
            im.load()
            mode = im.mode
            if mode in _GRAY_MODES:
                data = np.asarray(im.convert("L"), dtype=np.float64)
            elif mode in _COLOR_MODES:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                data = rgb @ np.asarray(LUMA_WEIGHTS)
            else:
                raise ImageFormatError(f"unsupported bit depth (mode {mode!r}) in {path}")
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ImageFormatError):
            raise
        raise ImageFormatError(f"malformed image {path}: {exc}") from exc
    if data.size == 0:
        raise ImageFormatError(f"zero-dimension image {path}")
    return GrayImage(np.clip(data / 255.0, 0.0, 1.0))


def save_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    """Write ``img`` as an 8-bit binary PGM (P5), rounding to the nearest level."""
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _axis_weights(n_in: int, n_out: int):
    # pixel-center alignment: output center i maps to input coordinate (i + 0.5) * n_in / n_out - 0.5
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = coords - lo
    return lo, hi, frac


def resize_bilinear(img: GrayImage, target_w: int, target_h: int) -> GrayImage:
    """Bilinear resize with pixel-center alignment and edge clamping."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dimensions must be positive")
    if (target_h, target_w) == img.shape:
        return GrayImage(img.pixels)
    src = img.pixels
    x0, x1, fx = _axis_weights(img.width, target_w)
    y0, y1, fy = _axis_weights(img.height, target_h)
    rows = src[y0] * (1.0 - fy)[:, None] + src[y1] * fy[:, None]
    out = rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx
    return GrayImage(np.clip(out, 0.0, 1.0))


def canonicalize(img: GrayImage, window_w: int, window_h: int) -> GrayImage:
    """Bring ``img`` to the analysis window by resizing (never cropping)."""
    if img.shape == (window_h, window_w):
        return img
    return resize_bilinear(img, window_w, window_h)


def summed_area(values: np.ndarray) -> np.ndarray:
    """Exclusive-prefix summed-area table of a 2-D array, shape ``(h + 1, w + 1)``."""
    values = np.asarray(values, dtype=np.float64)
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(values, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """Summed-area table of a GrayImage.

    ``table[y, x]`` holds the sum of all pixels with row < y and column < x,
    so row 0 and column 0 are zero and ``table[height, width]`` is the total.
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
            raise ValueError(f"invalid integral table shape {table.shape}")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    @property
    def total(self) -> float:
        return float(self.table[-1, -1])


def integral(img: GrayImage) -> IntegralImage:
    return IntegralImage(summed_area(img.pixels))


def box_sum(ii: IntegralImage, r: Rect) -> float:
    """Sum of the pixels inside ``r`` from four table lookups."""
    x, y, w, h = r
    if not Rect(x, y, w, h).fits(ii.width, ii.height):
        raise ValueError(f"rect {tuple(r)} out of bounds for {ii.width}x{ii.height} image")
    t = ii.table
    return float(t[y + h, x + w] - t[y + h, x] - t[y, x + w] + t[y, x])
