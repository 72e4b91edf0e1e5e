"""Discrete AdaBoost over decision stumps.

Weights start at 1/(2m) for the m positives and 1/(2l) for the l negatives.
Each round normalizes the weights, picks the stump with the lowest weighted
error over every feature, sets beta = eps / (1 - eps) and alpha = ln(1/beta),
and multiplies the weight of every correctly classified sample by beta.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .validation import check_binary_labels, resolve_threads

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
EPS_CLAMP = 1e-10
NORMALIZATION_TOL = 1e-9


class ModelFormatError(ValueError):
    """Raised for malformed or incompatible model files."""


class BankMismatchError(ValueError):
    """Raised when a model is applied to features from a different bank."""


class StumpFit(NamedTuple):
    threshold: float
    polarity: int
    error: float


@dataclass(frozen=True)
class WeakClassifier:
    """Stump ``h(x) = +1 if polarity * x[feature_id] < polarity * threshold else -1``."""

    feature_id: int
    threshold: float
    polarity: int
    alpha: float

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity}")
        if self.feature_id < 0:
            raise ValueError("feature_id must be non-negative")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")

    def predict(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X)[..., self.feature_id]
        return np.where(self.polarity * x < self.polarity * self.threshold, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class StrongClassifier:
    """Weighted vote of stumps; classifies "same" iff margin >= decision_threshold."""

    weak: tuple[WeakClassifier, ...]
    bank_fingerprint: str = ""
    decision_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weak", tuple(self.weak))

    @property
    def n_features_required(self) -> int:
        return max((w.feature_id for w in self.weak), default=-1) + 1

    def margin(self, X) -> np.ndarray:
        """Sum of alpha_t * h_t(x) for each row of ``X`` (or a single vector)."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] < self.n_features_required:
            raise BankMismatchError(
                f"feature vector has {X.shape[-1]} entries, model needs {self.n_features_required}"
            )
        total = np.zeros(X.shape[:-1], dtype=np.float64)
        for w in self.weak:
            total += w.alpha * w.predict(X)
        return total

    def predict(self, X) -> np.ndarray:
        """+1 (same) / -1 (different) per row."""
        return np.where(self.margin(X) >= self.decision_threshold, 1, -1).astype(np.int8)

    def with_threshold(self, decision_threshold: float) -> StrongClassifier:
        return StrongClassifier(self.weak, self.bank_fingerprint, float(decision_threshold))

    def check_bank(self, fingerprint: str) -> None:
        if self.bank_fingerprint and fingerprint != self.bank_fingerprint:
            raise BankMismatchError(
                f"bank fingerprint mismatch: model {self.bank_fingerprint[:12]}..., "
                f"features {fingerprint[:12]}..."
            )


def score(model: StrongClassifier, features) -> float | np.ndarray:
    """Margin of one feature vector (float) or of each row of a matrix."""
    m = model.margin(features)
    return float(m) if m.ndim == 0 else m


# --------------------------------------------------------------------------
# stump search


def _stump_from_sorted(vals: np.ndarray, signed_w: np.ndarray, w_pos, w_neg):
    """Best stump per row of feature-major sorted data.

    ``vals`` and ``signed_w`` have shape ``(n_features, n_samples)``; the
    latter holds +w for positives and -w for negatives in sorted order.
    Returns (error, threshold, polarity) arrays.
    """
    n_feat, n = vals.shape
    # D[k] = signed weight of the k smallest samples, k = 0..n
    D = np.zeros((n_feat, n + 1), dtype=np.float64)
    np.cumsum(signed_w, axis=1, out=D[:, 1:])
    # polarity +1 labels the k smallest positive: misses the positives above, accepts negatives below
    err_plus = w_pos - D
    err_minus = w_neg + D
    # the +inf cut accepts (or rejects) everything; pin it so it ties exactly with the -inf cut
    err_plus[:, n] = w_neg
    err_minus[:, n] = w_pos
    valid = np.ones((n_feat, n + 1), dtype=bool)
    valid[:, 1:n] = vals[:, 1:] != vals[:, :-1]
    err_plus[~valid] = np.inf
    err_minus[~valid] = np.inf

    rows = np.arange(n_feat)
    kp = np.argmin(err_plus, axis=1)
    km = np.argmin(err_minus, axis=1)
    ep = err_plus[rows, kp]
    em = err_minus[rows, km]
    take_plus = (ep < em) | ((ep == em) & (kp <= km))
    k = np.where(take_plus, kp, km)
    err = np.where(take_plus, ep, em)
    pol = np.where(take_plus, 1, -1)

    thr = np.empty(n_feat, dtype=np.float64)
    lo = k == 0
    hi = k == n
    mid = ~(lo | hi)
    thr[lo] = -np.inf
    thr[hi] = np.inf
    km_ = k[mid]
    thr[mid] = 0.5 * (vals[mid, km_ - 1] + vals[mid, km_])
    return np.clip(err, 0.0, None), thr, pol


def train_stump(values, labels, weights) -> StumpFit:
    """Optimal threshold and polarity for one feature.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values plus the -inf/+inf sentinels. Ties go to the smallest threshold,
    then to polarity +1.

    Parameters
    ----------
    values : array of shape (n_samples,)
    labels : array of +1/-1
    weights : non-negative array summing to 1
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    if not (np.any(labels == 1) and np.any(labels == -1)):
        raise ValueError("train_stump needs samples of both labels")
    order = np.argsort(values, kind="stable")
    signed = np.where(labels[order] == 1, weights[order], -weights[order])
    w_pos = weights[labels == 1].sum()
    w_neg = weights[labels == -1].sum()
    err, thr, pol = _stump_from_sorted(values[order][None], signed[None], w_pos, w_neg)
    return StumpFit(float(thr[0]), int(pol[0]), float(err[0]))


class SortedFeatures:
    """Feature-major sorted view of a training matrix, built once before boosting."""

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        self.n_samples, self.n_features = X.shape
        self.order = np.argsort(X.T, axis=1, kind="stable").astype(np.int32)
        self.values = np.take_along_axis(X.T, self.order, axis=1)

    def best_stump(self, signed_w: np.ndarray, n_jobs: int = 1, chunk: int = 2048):
        """(feature_id, threshold, polarity, error) of the best stump under ``signed_w``.

        Ties resolve to the lowest feature id regardless of ``n_jobs``.
        """
        w_pos = float(signed_w[signed_w > 0].sum())
        w_neg = float(-signed_w[signed_w < 0].sum())
        starts = list(range(0, self.n_features, chunk))
        errs = np.empty(self.n_features)
        thrs = np.empty(self.n_features)
        pols = np.empty(self.n_features, dtype=np.int8)

        def work(s):
            e = min(s + chunk, self.n_features)
            sw = signed_w[self.order[s:e]]
            errs[s:e], thrs[s:e], pols[s:e] = _stump_from_sorted(self.values[s:e], sw, w_pos, w_neg)

        workers = resolve_threads(n_jobs)
        if workers == 1 or len(starts) == 1:
            for s in starts:
                work(s)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, starts))
        f = int(np.argmin(errs))
        return f, float(thrs[f]), int(pols[f]), float(errs[f])


@dataclass
class RoundRecord:
    round: int
    feature_id: int
    threshold: float
    polarity: int
    error: float
    alpha: float
    bound: float
    train_error: float
    weight_sum: float


def error_bound(errors: Sequence[float]) -> np.ndarray:
    """Running product of 2*sqrt(eps_t*(1-eps_t))."""
    e = np.clip(np.asarray(errors, dtype=np.float64), EPS_CLAMP, 1.0 - EPS_CLAMP)
    return np.cumprod(2.0 * np.sqrt(e * (1.0 - e)))


def adaboost_train(
    X,
    y,
    rounds: int,
    bank_fingerprint: str = "",
    n_jobs: int = 1,
    callback=None,
) -> tuple[StrongClassifier, list[RoundRecord]]:
    """Train a StrongClassifier on a feature matrix.

    ``y`` holds +1 (same) / -1 (different). ``callback`` is called with
    each :class:`RoundRecord` as soon as the round completes.

    Training stops early if no stump beats chance (eps >= 0.5); that case is
    logged and the rounds trained so far are kept.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty sample set")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have inconsistent lengths")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    pos = y == 1
    neg = y == -1
    if not (pos | neg).all():
        raise ValueError("labels must be +1 or -1")
    m, l = int(pos.sum()), int(neg.sum())
    if m == 0 or l == 0:
        raise ValueError("both classes are required for training")

    initial = np.where(pos, 1.0 / (2 * m), 1.0 / (2 * l))
    weights = initial.copy()
    data = SortedFeatures(X)
    weak: list[WeakClassifier] = []
    history: list[RoundRecord] = []
    margin = np.zeros(X.shape[0])
    bound = 1.0

    for t in range(rounds):
        weights /= weights.sum()
        wsum = float(weights.sum())
        if abs(wsum - 1.0) > NORMALIZATION_TOL:
            raise RuntimeError(f"weights sum to {wsum!r} after normalization")
        signed = np.where(pos, weights, -weights)
        f, thr, pol, eps = data.best_stump(signed, n_jobs=n_jobs)
        if eps >= 0.5:
            if not weak:
                raise RuntimeError("no stump does better than chance on the training data")
            logger.warning("round %d: best weighted error %.6f >= 0.5, stopping early", t + 1, eps)
            break
        eps_c = min(max(eps, EPS_CLAMP), 1.0 - EPS_CLAMP)
        beta = eps_c / (1.0 - eps_c)
        alpha = math.log(1.0 / beta)
        stump = WeakClassifier(f, thr, pol, alpha)
        h = stump.predict(X)
        weights[h == y] *= beta
        weak.append(stump)

        margin += alpha * h
        wrong = np.where(margin >= 0.0, 1, -1) != y
        train_err = float(initial[wrong].sum())
        bound *= 2.0 * math.sqrt(eps_c * (1.0 - eps_c))
        if train_err > bound + 1e-12:
            raise RuntimeError(f"training error {train_err} exceeds bound {bound} at round {t + 1}")
        rec = RoundRecord(t + 1, f, thr, pol, eps, alpha, bound, train_err, wsum)
        history.append(rec)
        if callback is not None:
            callback(rec)

    return StrongClassifier(tuple(weak), bank_fingerprint, 0.0), history


# --------------------------------------------------------------------------
# serialization


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        raise ValueError("cannot serialize NaN")
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps_model(model: StrongClassifier) -> str:
    stumps = ",\n".join(
        f'    {{"feature_id": {w.feature_id}, "threshold": {_num(w.threshold)}, '
        f'"polarity": {w.polarity}, "alpha": {_num(w.alpha)}}}'
        for w in model.weak
    )
    return (
        "{\n"
        f'  "version": {MODEL_VERSION},\n'
        f"  \"bank_fingerprint\": {json.dumps(model.bank_fingerprint)},\n"
        f'  "decision_threshold": {_num(model.decision_threshold)},\n'
        f'  "stumps": [\n{stumps}\n  ]\n'
        "}\n"
    )


def loads_model(text: str) -> StrongClassifier:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    if not isinstance(obj, dict):
        raise ModelFormatError("malformed model file: top level is not an object")
    version = obj.get("version")
    if version != MODEL_VERSION or isinstance(version, bool):
        raise ModelFormatError(f"unsupported model version {version!r}")
    try:
        weak = tuple(
            WeakClassifier(
                int(s["feature_id"]), float(s["threshold"]), int(s["polarity"]), float(s["alpha"])
            )
            for s in obj["stumps"]
        )
        return StrongClassifier(weak, str(obj["bank_fingerprint"]), float(obj["decision_threshold"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def save_model(model: StrongClassifier, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path: str | os.PathLike) -> StrongClassifier:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


# --------------------------------------------------------------------------
# estimator


class DiscreteAdaBoost(ClassifierMixin, BaseEstimator):
    """Scikit-learn classifier wrapping :func:`adaboost_train`.

    Parameters
    ----------
    n_rounds : int
        Number of boosting rounds. Has no default and must be set before ``fit``.
    n_jobs : int
        Threads for the per-round stump search (0 or None = all cores).
        Results do not depend on it.

    Attributes
    ----------
    model_ : StrongClassifier
    history_ : list of RoundRecord
    classes_ : ndarray of shape (2,)
        The larger label is treated as "same".
    """

    def __init__(self, n_rounds=None, n_jobs=1):
        self.n_rounds = n_rounds
        self.n_jobs = n_jobs

    def fit(self, X, y, bank_fingerprint=""):
        if self.n_rounds is None:
            raise ValueError("n_rounds must be set")
        X = check_array(X, dtype=np.float64)
        if X.shape[0] != len(y):
            raise ValueError("X and y have inconsistent lengths")
        self.classes_, signed = check_binary_labels(y)
        self.model_, self.history_ = adaboost_train(
            X, signed, int(self.n_rounds), bank_fingerprint=bank_fingerprint, n_jobs=self.n_jobs
        )
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise BankMismatchError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.model_.margin(X) - self.model_.decision_threshold

    def predict(self, X):
        d = self.decision_function(X)
        return self.classes_[(d >= 0).astype(int)]

    @property
    def feature_importances_(self):
        check_is_fitted(self, "model_")
        imp = np.zeros(self.n_features_in_)
        for w in self.model_.weak:
            imp[w.feature_id] += w.alpha
        total = imp.sum()
        return imp / total if total > 0 else imp
