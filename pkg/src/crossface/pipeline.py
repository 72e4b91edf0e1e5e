"""Glue between manifests on disk, feature extraction and training."""

from __future__ import annotations

import logging

import numpy as np

from .config import RunConfig
from .evaluation import KFoldReport, PairManifest, assign_folds, kfold_scores
from .features import FeatureBank, extract_batch
from .image import canonicalize, load_image

logger = logging.getLogger(__name__)


def load_pair_arrays(manifest: PairManifest, window_w: int, window_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Load and canonicalize every image referenced by ``manifest``.

    Returns two ``(n_pairs, window_h, window_w)`` arrays. Each distinct path
    is decoded once.
    """
    cache: dict[str, np.ndarray] = {}

    def get(path):
        if path not in cache:
            cache[path] = canonicalize(load_image(path), window_w, window_h).pixels
        return cache[path]

    n = len(manifest)
    first = np.empty((n, window_h, window_w))
    second = np.empty((n, window_h, window_w))
    for i, e in enumerate(manifest.entries):
        first[i] = get(e.path1)
        second[i] = get(e.path2)
    return first, second


def manifest_features(manifest: PairManifest, bank: FeatureBank, n_jobs: int = 1) -> np.ndarray:
    first, second = load_pair_arrays(manifest, bank.window_w, bank.window_h)
    return extract_batch(first, second, bank, n_jobs=n_jobs)


def kfold_evaluate(
    manifest: PairManifest, k: int, config: RunConfig, identity_disjoint: bool = False
) -> KFoldReport:
    """k-fold protocol over a manifest: per-fold ROC plus in-sample and held-out EER."""
    if config.rounds is None:
        raise ValueError("rounds must be set for k-fold evaluation")
    bank = config.bank()
    folds = assign_folds(manifest, k, seed=config.seed, identity_disjoint=identity_disjoint)
    X = manifest_features(manifest, bank, n_jobs=config.threads)
    return kfold_scores(
        X, manifest.labels == 1, folds, config.rounds, n_jobs=config.threads, bank_fingerprint=bank.fingerprint()
    )
