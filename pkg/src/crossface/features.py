"""Cross-image rectangle features over an image pair.

Two families are computed from the pair's summed-area tables:

* Haar-like cross-image filters: the "black" sub-rectangles are summed in the
  first image, the "white" ones in the second, and the value is black minus
  white (raw sums, no area normalization).
* NCC filters: the correlation coefficient between the same box in both
  images, computed from five summed-area tables (I1, I2, I1*I2, I1^2, I2^2).
"""

from __future__ import annotations

import enum
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .image import GrayImage, IntegralImage, Rect, box_sum, summed_area
from .validation import check_pairs, resolve_threads

# Degenerate-patch cutoff on the un-normalized variance terms n*sum(I^2) - (sum I)^2.
EPS_VAR = 1e-10


class FeatureKind(enum.IntEnum):
    HaarTwoH = 0
    HaarTwoV = 1
    HaarThree = 2
    HaarFour = 3
    Ncc = 4

    @property
    def is_haar(self) -> bool:
        return self is not FeatureKind.Ncc

    @property
    def divisors(self) -> tuple[int, int]:
        """Required divisibility of (frame width, frame height)."""
        return _DIVISORS[self]


_DIVISORS = {
    FeatureKind.HaarTwoH: (2, 1),
    FeatureKind.HaarTwoV: (1, 2),
    FeatureKind.HaarThree: (3, 1),
    FeatureKind.HaarFour: (2, 2),
    FeatureKind.Ncc: (1, 1),
}


class FeatureDescriptor(NamedTuple):
    id: int
    kind: FeatureKind
    frame: Rect

    def to_line(self) -> str:
        x, y, w, h = self.frame
        return f"{self.id} {self.kind.name} {x} {y} {w} {h}"


def haar_regions(kind: FeatureKind, frame: Rect) -> tuple[list[Rect], list[Rect]]:
    """Split a Haar frame into (black, white) sub-rectangles.

    Black regions are read from the first image, white ones from the second.
    """
    x, y, w, h = frame
    if kind is FeatureKind.HaarTwoH:
        hw = w // 2
        return [Rect(x, y, hw, h)], [Rect(x + hw, y, hw, h)]
    if kind is FeatureKind.HaarTwoV:
        hh = h // 2
        return [Rect(x, y, w, hh)], [Rect(x, y + hh, w, hh)]
    if kind is FeatureKind.HaarThree:
        tw = w // 3
        return (
            [Rect(x, y, tw, h), Rect(x + 2 * tw, y, tw, h)],
            [Rect(x + tw, y, tw, h)],
        )
    if kind is FeatureKind.HaarFour:
        hw, hh = w // 2, h // 2
        return (
            [Rect(x, y, hw, hh), Rect(x + hw, y + hh, hw, hh)],
            [Rect(x + hw, y, hw, hh), Rect(x, y + hh, hw, hh)],
        )
    raise ValueError(f"{kind!r} is not a Haar kind")


@dataclass(frozen=True)
class Quantization:
    min_size: int = 8
    position_stride: int = 6
    size_stride: int = 4

    def __post_init__(self):
        if self.min_size < 1 or self.position_stride < 1 or self.size_stride < 1:
            raise ValueError("min_size and strides must be >= 1")


class FeatureBank:
    """Deterministically ordered enumeration of feature descriptors.

    Use :func:`generate_bank` to build one. The bank is immutable; the
    sparse lookup plans used by :func:`extract_all` are built lazily and cached.
    """

    def __init__(
        self,
        window_w: int,
        window_h: int,
        descriptors: Sequence[FeatureDescriptor],
        quantization: Quantization | None = None,
    ):
        self.window_w = int(window_w)
        self.window_h = int(window_h)
        self.quantization = quantization
        self.descriptors = tuple(descriptors)
        for i, d in enumerate(self.descriptors):
            if d.id != i:
                raise ValueError(f"descriptor ids must be gapless, got {d.id} at position {i}")
            if not d.frame.fits(self.window_w, self.window_h):
                raise ValueError(f"descriptor {d.id} frame out of window")
            dw, dh = d.kind.divisors
            if d.frame.w % dw or d.frame.h % dh:
                raise ValueError(f"descriptor {d.id} frame does not tile for {d.kind.name}")

    def __len__(self):
        return len(self.descriptors)

    def __getitem__(self, i):
        return self.descriptors[i]

    def __iter__(self):
        return iter(self.descriptors)

    def __eq__(self, other):
        if not isinstance(other, FeatureBank):
            return NotImplemented
        return self.to_text() == other.to_text()

    def __repr__(self):
        return f"FeatureBank(window={self.window_w}x{self.window_h}, size={len(self)})"

    @cached_property
    def kinds(self) -> np.ndarray:
        return np.fromiter((d.kind for d in self.descriptors), dtype=np.int8, count=len(self))

    def to_text(self) -> str:
        lines = [f"# window {self.window_w} {self.window_h}"]
        q = self.quantization
        if q is not None:
            lines.append(
                f"# quantization min_size={q.min_size} position_stride={q.position_stride} "
                f"size_stride={q.size_stride}"
            )
        lines.extend(d.to_line() for d in self.descriptors)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> FeatureBank:
        window = None
        quant = None
        descriptors = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "window":
                    window = (int(parts[1]), int(parts[2]))
                elif parts and parts[0] == "quantization":
                    kv = dict(p.split("=", 1) for p in parts[1:])
                    quant = Quantization(**{k: int(v) for k, v in kv.items()})
                continue
            fid, kind, x, y, w, h = line.split()
            descriptors.append(
                FeatureDescriptor(int(fid), FeatureKind[kind], Rect(int(x), int(y), int(w), int(h)))
            )
        if window is None:
            raise ValueError("bank text lacks a '# window W H' header")
        return cls(window[0], window[1], descriptors, quant)

    def fingerprint(self) -> str:
        """SHA-256 of the text export; binds trained models to this bank."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    @cached_property
    def _plan(self) -> _ExtractionPlan:
        return _ExtractionPlan(self)


def _axis_grid(extent: int, q: Quantization, divisor: int):
    """(position, size) pairs along one axis, positions ascending then sizes."""
    sizes = [s for s in range(q.min_size, extent + 1, q.size_stride) if s % divisor == 0]
    return sizes, {s: range(0, extent - s + 1, q.position_stride) for s in sizes}


def generate_bank(window_w: int = 64, window_h: int = 64, q: Quantization | None = None) -> FeatureBank:
    """Enumerate every quantized frame for each feature kind.

    Ordering is kind-major, then y, x, h, w ascending.
    """
    q = q or Quantization()
    if window_w < q.min_size or window_h < q.min_size:
        raise ValueError(
            f"window {window_w}x{window_h} smaller than min_size {q.min_size}"
        )
    descriptors = []
    for kind in FeatureKind:
        dw, dh = kind.divisors
        widths, xs = _axis_grid(window_w, q, dw)
        heights, ys = _axis_grid(window_h, q, dh)
        frames = [
            Rect(x, y, w, h)
            for h in heights
            for y in ys[h]
            for w in widths
            for x in xs[w]
        ]
        frames.sort(key=lambda r: (r.y, r.x, r.h, r.w))
        for frame in frames:
            descriptors.append(FeatureDescriptor(len(descriptors), kind, frame))
    return FeatureBank(window_w, window_h, descriptors, q)


@dataclass(frozen=True, eq=False)
class PairIntegrals:
    """The five summed-area tables of an image pair.

    ``centered`` optionally holds the same five tables built from
    mean-subtracted intensities. Correlation is invariant to that shift and
    the smaller magnitudes avoid cancellation in the NCC numerator and
    variance terms, so :func:`ncc_value` prefers them when present.
    """

    ii1: IntegralImage
    ii2: IntegralImage
    ii12: IntegralImage
    ii1sq: IntegralImage
    ii2sq: IntegralImage
    centered: tuple[IntegralImage, ...] | None = None

    @property
    def width(self) -> int:
        return self.ii1.width

    @property
    def height(self) -> int:
        return self.ii1.height

    @property
    def ncc_tables(self) -> tuple[IntegralImage, ...]:
        if self.centered is not None:
            return self.centered
        return (self.ii1, self.ii2, self.ii12, self.ii1sq, self.ii2sq)

    def stacked(self) -> np.ndarray:
        """Flattened ii1, ii2 and the five NCC tables, shape ``(7, (h+1)*(w+1))``."""
        tables = (self.ii1, self.ii2) + tuple(self.ncc_tables)
        return np.stack([t.table.ravel() for t in tables])


def _five_maps(a: np.ndarray, b: np.ndarray):
    return a, b, a * b, a * a, b * b


def make_pair_integrals(img1: GrayImage, img2: GrayImage) -> PairIntegrals:
    if img1.shape != img2.shape:
        raise ValueError(f"pair dimension mismatch: {img1.shape} vs {img2.shape}")
    a, b = img1.pixels, img2.pixels
    raw = [IntegralImage(summed_area(m)) for m in _five_maps(a, b)]
    centered = tuple(IntegralImage(summed_area(m)) for m in _five_maps(a - a.mean(), b - b.mean()))
    return PairIntegrals(*raw, centered=centered)


@dataclass(frozen=True)
class PatchStats:
    n: int
    sum1: float
    sum2: float
    mean1: float
    mean2: float
    var1: float
    var2: float


def patch_stats(pi: PairIntegrals, r: Rect) -> PatchStats:
    n = r.w * r.h
    s1, s2 = box_sum(pi.ii1, r), box_sum(pi.ii2, r)
    q1, q2 = box_sum(pi.ii1sq, r), box_sum(pi.ii2sq, r)
    m1, m2 = s1 / n, s2 / n
    var1 = max(q1 / n - m1 * m1, 0.0)
    var2 = max(q2 / n - m2 * m2, 0.0)
    return PatchStats(n, s1, s2, m1, m2, var1, var2)


def _check_descriptor(pi: PairIntegrals, d: FeatureDescriptor) -> None:
    if not d.frame.fits(pi.width, pi.height):
        raise ValueError(f"frame {tuple(d.frame)} out of bounds for {pi.width}x{pi.height} pair")


def haar_value(pi: PairIntegrals, d: FeatureDescriptor) -> float:
    if not FeatureKind(d.kind).is_haar:
        raise ValueError(f"haar_value called on {FeatureKind(d.kind).name} descriptor")
    _check_descriptor(pi, d)
    black, white = haar_regions(FeatureKind(d.kind), d.frame)
    return sum(box_sum(pi.ii1, r) for r in black) - sum(box_sum(pi.ii2, r) for r in white)


def _ncc_from_sums(n, s1, s2, s12, s11, s22):
    num = n * s12 - s1 * s2
    v1 = n * s11 - s1 * s1
    v2 = n * s22 - s2 * s2
    # relative guard catches constant patches whose variance term is pure round-off
    degenerate = (v1 <= EPS_VAR * np.maximum(n * s11, 1.0)) | (v2 <= EPS_VAR * np.maximum(n * s22, 1.0))
    den = np.sqrt(np.maximum(v1, 0.0) * np.maximum(v2, 0.0))
    degenerate |= den < EPS_VAR
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, den))
    return np.clip(out, -1.0, 1.0)


def ncc_value(pi: PairIntegrals, d: FeatureDescriptor) -> float:
    """Correlation coefficient of the frame in both images, in [-1, 1].

    Degenerate (near-constant) patches return 0.
    """
    if FeatureKind(d.kind) is not FeatureKind.Ncc:
        raise ValueError(f"ncc_value called on {FeatureKind(d.kind).name} descriptor")
    _check_descriptor(pi, d)
    r = d.frame
    sums = [box_sum(t, r) for t in pi.ncc_tables]
    return float(_ncc_from_sums(r.w * r.h, *sums))


def feature_value(pi: PairIntegrals, d: FeatureDescriptor) -> float:
    if FeatureKind(d.kind).is_haar:
        return haar_value(pi, d)
    return ncc_value(pi, d)


class _ExtractionPlan:
    """Sparse corner-lookup matrices for evaluating a whole bank at once.

    ``haar1``/``haar2`` map flattened ii1/ii2 tables to the black and white
    sums of every Haar descriptor; ``box`` maps any table to the box sum of
    every NCC frame.
    """

    def __init__(self, bank: FeatureBank):
        stride = bank.window_w + 1
        self.n_features = len(bank)
        self.table_size = (bank.window_h + 1) * stride
        self.haar_ids = np.flatnonzero(bank.kinds != FeatureKind.Ncc)
        self.ncc_ids = np.flatnonzero(bank.kinds == FeatureKind.Ncc)

        def corners(r: Rect):
            x, y, w, h = r
            return (
                ((y + h) * stride + x + w, 1.0),
                ((y + h) * stride + x, -1.0),
                (y * stride + x + w, -1.0),
                (y * stride + x, 1.0),
            )

        def build(rows_of_rects):
            rows, cols, vals = [], [], []
            for row, rects in enumerate(rows_of_rects):
                for r in rects:
                    for col, v in corners(r):
                        rows.append(row)
                        cols.append(col)
                        vals.append(v)
            m = sp.coo_matrix(
                (vals, (rows, cols)), shape=(len(rows_of_rects), self.table_size), dtype=np.float64
            )
            # duplicates (shared corners) are summed by tocsr
            return m.tocsr()

        black, white = [], []
        for i in self.haar_ids:
            d = bank[i]
            b, w = haar_regions(d.kind, d.frame)
            black.append(b)
            white.append(w)
        self.haar1 = build(black)
        self.haar2 = build(white)
        self.box = build([[bank[i].frame] for i in self.ncc_ids])
        self.ncc_n = np.array([bank[i].frame.w * bank[i].frame.h for i in self.ncc_ids], dtype=np.float64)

    def evaluate(self, tables: np.ndarray) -> np.ndarray:
        """``tables`` has shape ``(n_pairs, 7, table_size)`` as produced by
        :meth:`PairIntegrals.stacked`; returns ``(n_pairs, n_features)``."""
        n_pairs = tables.shape[0]
        out = np.empty((n_pairs, self.n_features), dtype=np.float64)
        t = [np.ascontiguousarray(tables[:, k, :].T) for k in range(7)]
        if self.haar_ids.size:
            out[:, self.haar_ids] = (self.haar1 @ t[0] - self.haar2 @ t[1]).T
        if self.ncc_ids.size:
            s = [self.box @ tk for tk in t[2:]]
            n = self.ncc_n[:, None]
            out[:, self.ncc_ids] = _ncc_from_sums(n, s[0], s[1], s[2], s[3], s[4]).T
        return out


def extract_all(pi: PairIntegrals, bank: FeatureBank) -> np.ndarray:
    """Feature vector of one pair, ordered as the bank."""
    if (pi.width, pi.height) != (bank.window_w, bank.window_h):
        raise ValueError(
            f"pair is {pi.width}x{pi.height} but bank window is {bank.window_w}x{bank.window_h}"
        )
    return bank._plan.evaluate(pi.stacked()[None])[0]


def _pair_tables(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batch counterpart of :meth:`PairIntegrals.stacked`, shape ``(n, 7, table_size)``."""
    n, h, w = a.shape
    ac = a - a.mean(axis=(1, 2), keepdims=True)
    bc = b - b.mean(axis=(1, 2), keepdims=True)
    maps = np.stack([a, b, *_five_maps(ac, bc)], axis=1)
    tables = np.zeros((n, 7, h + 1, w + 1), dtype=np.float64)
    np.cumsum(maps, axis=2, out=tables[:, :, 1:, 1:])
    np.cumsum(tables[:, :, 1:, 1:], axis=3, out=tables[:, :, 1:, 1:])
    return tables.reshape(n, 7, -1)


def extract_batch(
    first: np.ndarray,
    second: np.ndarray,
    bank: FeatureBank,
    n_jobs: int = 1,
    chunk_size: int = 32,
) -> np.ndarray:
    """Feature matrix for a batch of canonical-size pairs.

    ``first`` and ``second`` have shape ``(n_pairs, window_h, window_w)``.
    Output rows do not depend on ``n_jobs`` or ``chunk_size``.
    """
    first = np.asarray(first, dtype=np.float64)
    second = np.asarray(second, dtype=np.float64)
    expected = (bank.window_h, bank.window_w)
    if first.shape != second.shape or first.shape[1:] != expected:
        raise ValueError(
            f"pair arrays {first.shape}/{second.shape} do not match bank window {expected}"
        )
    n = first.shape[0]
    out = np.empty((n, len(bank)), dtype=np.float64)
    plan = bank._plan

    def work(start):
        stop = min(start + chunk_size, n)
        out[start:stop] = plan.evaluate(_pair_tables(first[start:stop], second[start:stop]))

    starts = range(0, n, chunk_size)
    workers = resolve_threads(n_jobs)
    if workers == 1 or n <= chunk_size:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, starts))
    return out


class CrossImageFeatures(TransformerMixin, BaseEstimator):
    """Transformer mapping image pairs to cross-image feature vectors.

    Parameters
    ----------
    window_w, window_h : int
        Canonical analysis window. Pairs of another size are resized.
    min_size, position_stride, size_stride : int
        Quantization of the feature bank.
    n_jobs : int
        Worker threads for extraction; 0 or None means all cores.

    Attributes
    ----------
    bank_ : FeatureBank
        The enumerated descriptors, available after ``fit``.

    Notes
    -----
    ``X`` is an array of shape ``(n_pairs, 2, height, width)`` with
    intensities in [0, 1], or a sequence of ``(GrayImage, GrayImage)``.
    """

    def __init__(self, window_w=64, window_h=64, min_size=8, position_stride=6, size_stride=4, n_jobs=1):
        self.window_w = window_w
        self.window_h = window_h
        self.min_size = min_size
        self.position_stride = position_stride
        self.size_stride = size_stride
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        q = Quantization(self.min_size, self.position_stride, self.size_stride)
        self.bank_ = generate_bank(self.window_w, self.window_h, q)
        self.n_features_out_ = len(self.bank_)
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        pairs = check_pairs(X, self.window_w, self.window_h)
        return extract_batch(pairs[:, 0], pairs[:, 1], self.bank_, n_jobs=self.n_jobs)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "bank_")
        return np.array(
            [f"{d.kind.name}_{d.frame.x}_{d.frame.y}_{d.frame.w}_{d.frame.h}" for d in self.bank_],
            dtype=object,
        )


def naive_feature_value(img1: np.ndarray, img2: np.ndarray, d: FeatureDescriptor) -> float:
    """Reference evaluation by direct pixel summation, without summed-area tables."""
    kind = FeatureKind(d.kind)
    if kind.is_haar:
        black, white = haar_regions(kind, d.frame)
        b = sum(float(img1[r.y:r.y + r.h, r.x:r.x + r.w].sum()) for r in black)
        w = sum(float(img2[r.y:r.y + r.h, r.x:r.x + r.w].sum()) for r in white)
        return b - w
    r = d.frame
    p1 = img1[r.y:r.y + r.h, r.x:r.x + r.w]
    p2 = img2[r.y:r.y + r.h, r.x:r.x + r.w]
    if np.ptp(p1) == 0 or np.ptp(p2) == 0:
        return 0.0
    d1 = p1 - p1.mean()
    d2 = p2 - p2.mean()
    sigma1 = math.sqrt(float((d1 * d1).mean()))
    sigma2 = math.sqrt(float((d2 * d2).mean()))
    return float((d1 * d2).mean() / (sigma1 * sigma2))


def naive_extract(img1: np.ndarray, img2: np.ndarray, bank: FeatureBank) -> np.ndarray:
    return np.array([naive_feature_value(img1, img2, d) for d in bank], dtype=np.float64)
