"""Synthetic identity corpora: smooth per-identity patterns plus pixel noise."""

from __future__ import annotations

import os

import numpy as np

from .image import GrayImage, save_pgm


def identity_pattern(rng: np.random.Generator, width: int = 64, height: int = 64, n_blobs: int = 6) -> np.ndarray:
    """A smooth random pattern with values in [0.15, 0.85]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    xx /= max(width - 1, 1)
    yy /= max(height - 1, 1)
    img = rng.uniform(-0.5, 0.5) * xx + rng.uniform(-0.5, 0.5) * yy
    for _ in range(n_blobs):
        cx, cy = rng.uniform(0.0, 1.0, size=2)
        sx, sy = rng.uniform(0.08, 0.3, size=2)
        amp = rng.uniform(-1.0, 1.0)
        img += amp * np.exp(-0.5 * (((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.full((height, width), 0.5)
    return 0.15 + 0.7 * (img - lo) / (hi - lo)


def make_corpus(
    n_identities: int = 10,
    n_variants: int = 20,
    width: int = 64,
    height: int = 64,
    noise: float = 0.05,
    seed: int = 0,
) -> dict[str, list[GrayImage]]:
    """Generate ``n_variants`` noisy copies of one base pattern per identity."""
    rng = np.random.default_rng(seed)
    corpus = {}
    for k in range(n_identities):
        base = identity_pattern(rng, width, height)
        corpus[f"id{k:03d}"] = [
            GrayImage(np.clip(base + rng.normal(0.0, noise, size=base.shape), 0.0, 1.0))
            for _ in range(n_variants)
        ]
    return corpus


def write_corpus(corpus: dict[str, list[GrayImage]], root: str | os.PathLike) -> dict[str, list[str]]:
    """Write images as ``root/<identity>/<index>.pgm``; returns the path listing."""
    root = os.fspath(root)
    listing = {}
    for name, images in corpus.items():
        sub = os.path.join(root, name)
        os.makedirs(sub, exist_ok=True)
        paths = []
        for i, img in enumerate(images):
            p = os.path.join(sub, f"{i:03d}.pgm")
            save_pgm(img, p)
            paths.append(p)
        listing[name] = paths
    return listing
