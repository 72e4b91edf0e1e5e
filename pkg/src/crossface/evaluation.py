"""Verification metrics and protocols: ROC, EER, pair sampling, k-fold runs."""

from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .boosting import adaboost_train


@dataclass
class RocCurve:
    """FAR/FRR sweep over margin thresholds, rates in percent.

    A pair is classified "same" iff its margin is >= the threshold.
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    tpr: np.ndarray
    eer: float
    eer_threshold: float
    n_pos: int
    n_neg: int

    @property
    def accuracy_at_eer(self) -> float:
        return 100.0 - self.eer

    @property
    def points(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        lines = ["threshold,far,frr,tpr"]
        for t, a, r, p in self.points:
            lines.append(f"{t!r},{a!r},{r!r},{p!r}")
        return "\n".join(lines) + "\n"


def _positive_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels
    return labels == 1


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """-inf, midpoints between consecutive distinct scores, +inf."""
    u = np.unique(scores)
    return np.concatenate(([-np.inf], 0.5 * (u[1:] + u[:-1]), [np.inf]))


def error_rates(scores, labels, threshold) -> tuple[float, float]:
    """(FAR, FRR) in percent at one threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels)
    accept = scores >= threshold
    far = 100.0 * np.count_nonzero(accept & ~pos) / np.count_nonzero(~pos)
    frr = 100.0 * np.count_nonzero(~accept & pos) / np.count_nonzero(pos)
    return far, frr


def roc(scores, labels) -> RocCurve:
    """ROC sweep and equal error rate.

    The EER point is the candidate threshold minimizing |FAR - FRR| (ties to
    the smaller threshold); the EER is the mean of FAR and FRR there.

    Parameters
    ----------
    scores : array of margins
    labels : array with 1 / True for "same", anything else for "different"
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels)
    if scores.shape != pos.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc needs at least one score of each label")
    sp = np.sort(scores[pos])
    sn = np.sort(scores[~pos])
    thr = candidate_thresholds(scores)
    accepted_neg = n_neg - np.searchsorted(sn, thr, side="left")
    accepted_pos = n_pos - np.searchsorted(sp, thr, side="left")
    far = 100.0 * accepted_neg / n_neg
    tpr = 100.0 * accepted_pos / n_pos
    rejected_pos = n_pos - accepted_pos
    frr = 100.0 * rejected_pos / n_pos
    # compare |FAR - FRR| on integer counts so exact ties resolve to the smaller threshold
    gap = np.abs(accepted_neg.astype(np.int64) * n_pos - rejected_pos.astype(np.int64) * n_neg)
    i = int(np.argmin(gap))
    eer = 0.5 * (far[i] + frr[i])
    return RocCurve(thr, far, frr, tpr, float(eer), float(thr[i]), n_pos, n_neg)


# --------------------------------------------------------------------------
# pair manifests


@dataclass(frozen=True)
class PairEntry:
    path1: str
    path2: str
    label: int
    fold: int | None = None


@dataclass
class PairManifest:
    entries: list[PairEntry]
    replacement: tuple[str, ...] = ()
    comments: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int8)

    @property
    def folds(self) -> np.ndarray | None:
        if not self.entries or any(e.fold is None for e in self.entries):
            return None
        return np.array([e.fold for e in self.entries], dtype=np.int64)

    def to_text(self, base_dir: str | None = None) -> str:
        lines = [f"# {c}" for c in self.comments]
        if self.replacement:
            lines.append(f"# sampled_with_replacement: {','.join(self.replacement)}")
        for e in self.entries:
            p1, p2 = e.path1, e.path2
            if base_dir is not None:
                # relative entries are taken relative to the working directory
                p1 = os.path.relpath(os.path.abspath(p1), base_dir)
                p2 = os.path.relpath(os.path.abspath(p2), base_dir)
            fields_ = [p1, p2, str(int(e.label))]
            if e.fold is not None:
                fields_.append(str(e.fold))
            lines.append("\t".join(fields_))
        return "\n".join(lines) + "\n"


def parse_manifest(text: str, base_dir: str | None = None) -> PairManifest:
    """Parse ``path1<TAB>path2<TAB>{1|0}[<TAB>fold]`` lines.

    Relative paths are resolved against ``base_dir`` when given.
    """
    entries = []
    replacement: tuple[str, ...] = ()
    comments = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            body = line.lstrip()[1:].strip()
            if body.startswith("sampled_with_replacement:"):
                replacement = tuple(s for s in body.split(":", 1)[1].strip().split(",") if s)
            else:
                comments.append(body)
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise ValueError(f"manifest line {lineno}: expected 3 or 4 tab-separated fields")
        if parts[2] not in ("0", "1"):
            raise ValueError(f"manifest line {lineno}: label must be 1 or 0, got {parts[2]!r}")
        p1, p2 = parts[0], parts[1]
        if base_dir is not None:
            p1 = p1 if os.path.isabs(p1) else os.path.join(base_dir, p1)
            p2 = p2 if os.path.isabs(p2) else os.path.join(base_dir, p2)
        fold = int(parts[3]) if len(parts) == 4 else None
        entries.append(PairEntry(p1, p2, int(parts[2]), fold))
    return PairManifest(entries, replacement, comments)


def read_manifest(path: str | os.PathLike) -> PairManifest:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read(), os.path.dirname(os.path.abspath(path)))


def write_manifest(manifest: PairManifest, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest.to_text(base))


IMAGE_SUFFIXES = (".pgm", ".png")


def load_corpus(root: str | os.PathLike) -> dict[str, list[str]]:
    """Identity-labeled image list from ``root/<identity>/<image>`` files."""
    root = os.fspath(root)
    corpus = {}
    for name in sorted(os.listdir(root)):
        sub = os.path.join(root, name)
        if not os.path.isdir(sub):
            continue
        images = sorted(
            os.path.join(sub, f) for f in os.listdir(sub) if f.lower().endswith(IMAGE_SUFFIXES)
        )
        if images:
            corpus[name] = images
    return corpus


def _decode(flat: np.ndarray, counts: np.ndarray, partner_start: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map flat pair indices to (i, j) given per-image partner counts and starts."""
    cum = np.cumsum(counts)
    i = np.searchsorted(cum, flat, side="right")
    offset = flat - (cum[i] - counts[i])
    return i, partner_start[i] + offset


def _sample(rng: np.random.Generator, pool: int, n: int) -> tuple[np.ndarray, bool]:
    if n <= pool:
        return np.sort(rng.choice(pool, size=n, replace=False)), False
    return np.sort(rng.integers(0, pool, size=n)), True


def _sample_pairs(corpus: Mapping[str, Sequence[str]], n_pos, n_neg, rng):
    names = sorted(corpus)
    images = [p for name in names for p in corpus[name]]
    sizes = np.array([len(corpus[name]) for name in names], dtype=np.int64)
    ends = np.cumsum(sizes)
    owner = np.repeat(np.arange(len(names)), sizes)
    idx = np.arange(len(images), dtype=np.int64)
    block_end = ends[owner]
    # image i pairs with later images of its own identity (positives) or of later identities (negatives)
    pos_counts = block_end - idx - 1
    neg_counts = len(images) - block_end
    n_pos_pool = int(pos_counts.sum())
    n_neg_pool = int(neg_counts.sum())
    if n_pos > 0 and n_pos_pool == 0:
        raise ValueError("no positive pairs available")
    if n_neg > 0 and n_neg_pool == 0:
        raise ValueError("no negative pairs available")
    replaced = []
    entries = []
    if n_pos > 0:
        flat, rep = _sample(rng, n_pos_pool, n_pos)
        if rep:
            replaced.append("positives")
        i, j = _decode(flat, pos_counts, idx + 1)
        entries += [(images[a], images[b], 1) for a, b in zip(i, j)]
    if n_neg > 0:
        flat, rep = _sample(rng, n_neg_pool, n_neg)
        if rep:
            replaced.append("negatives")
        i, j = _decode(flat, neg_counts, block_end)
        entries += [(images[a], images[b], 0) for a, b in zip(i, j)]
    return entries, replaced


def _split_counts(n: int, k: int) -> list[int]:
    return [n // k + (1 if g < n % k else 0) for g in range(k)]


def build_pairs(
    corpus: Mapping[str, Sequence[str]],
    n_pos: int,
    n_neg: int,
    seed: int = 0,
    k: int | None = None,
    identity_disjoint: bool = False,
) -> PairManifest:
    """Sample same-identity and cross-identity pairs from a corpus.

    Pairs are drawn uniformly without replacement; if a pool is too small
    the draw falls back to sampling with replacement and the manifest
    records it. With ``k``, entries get fold ids round-robin after a seeded
    shuffle; with ``identity_disjoint`` the identities are first split into
    ``k`` groups and all pairs of a fold come from its own group.
    """
    if n_pos < 0 or n_neg < 0:
        raise ValueError("pair counts must be non-negative")
    rng = np.random.default_rng(seed)
    corpus = {name: list(paths) for name, paths in corpus.items() if paths}
    if identity_disjoint:
        if not k or k < 2:
            raise ValueError("identity-disjoint folds need k >= 2")
        names = sorted(corpus)
        order = rng.permutation(len(names))
        groups = [[names[i] for i in order[g::k]] for g in range(k)]
        entries, replaced = [], set()
        for g, (gp, gn) in enumerate(zip(_split_counts(n_pos, k), _split_counts(n_neg, k))):
            sub = {name: corpus[name] for name in groups[g]}
            try:
                part, rep = _sample_pairs(sub, gp, gn, rng)
            except ValueError as exc:
                raise ValueError(f"fold {g}: {exc}") from None
            entries += [PairEntry(a, b, lab, g) for a, b, lab in part]
            replaced.update(rep)
        perm = rng.permutation(len(entries))
        return PairManifest([entries[i] for i in perm], tuple(sorted(replaced)))

    entries, replaced = _sample_pairs(corpus, n_pos, n_neg, rng)
    perm = rng.permutation(len(entries))
    out = []
    for pos, i in enumerate(perm):
        a, b, lab = entries[i]
        out.append(PairEntry(a, b, lab, pos % k if k else None))
    return PairManifest(out, tuple(replaced))


def identity_of(path: str) -> str:
    """Identity label of an image path: its parent directory name."""
    return os.path.basename(os.path.dirname(os.path.abspath(path)))


def assign_folds(manifest: PairManifest, k: int, seed: int = 0, identity_disjoint: bool = False) -> np.ndarray:
    """Fold id per entry.

    Existing fold ids are kept. Otherwise entries go round-robin after a
    seeded shuffle, or, with ``identity_disjoint``, connected groups of
    identities (linked by any pair) are spread over folds largest first.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    existing = manifest.folds
    if existing is not None:
        distinct = np.unique(existing)
        if distinct.size != k:
            raise ValueError(f"manifest defines {distinct.size} folds but k={k}")
        remap = {f: i for i, f in enumerate(distinct)}
        return np.array([remap[f] for f in existing], dtype=np.int64)
    n = len(manifest)
    rng = np.random.default_rng(seed)
    if not identity_disjoint:
        folds = np.empty(n, dtype=np.int64)
        folds[rng.permutation(n)] = np.arange(n) % k
        return folds

    parent: dict[str, str] = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in manifest.entries:
        ra, rb = find(identity_of(e.path1)), find(identity_of(e.path2))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    members = defaultdict(list)
    for i, e in enumerate(manifest.entries):
        members[find(identity_of(e.path1))].append(i)
    if len(members) < k:
        raise ValueError(
            f"only {len(members)} identity-disjoint group(s) in the manifest, cannot form {k} folds"
        )
    groups = sorted(members.values(), key=lambda g: (-len(g), g[0]))
    load = [0] * k
    folds = np.empty(n, dtype=np.int64)
    for g in groups:
        f = int(np.argmin(load))
        folds[g] = f
        load[f] += len(g)
    return folds


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    roc: RocCurve
    eer_heldout: float
    heldout_threshold: float

    @property
    def eer_insample(self) -> float:
        return self.roc.eer

    @property
    def accuracy_insample(self) -> float:
        return self.roc.accuracy_at_eer

    @property
    def accuracy_heldout(self) -> float:
        return 100.0 - self.eer_heldout


@dataclass
class KFoldReport:
    folds: list[FoldResult]

    def _stats(self, values):
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0

    @property
    def mean_accuracy(self) -> float:
        return self._stats([f.accuracy_insample for f in self.folds])[0]

    @property
    def std_accuracy(self) -> float:
        return self._stats([f.accuracy_insample for f in self.folds])[1]

    @property
    def mean_accuracy_heldout(self) -> float:
        return self._stats([f.accuracy_heldout for f in self.folds])[0]

    @property
    def std_accuracy_heldout(self) -> float:
        return self._stats([f.accuracy_heldout for f in self.folds])[1]

    def summary(self) -> dict:
        return {
            "k": len(self.folds),
            "folds": [
                {
                    "fold": f.fold,
                    "n_train": f.n_train,
                    "n_test": f.n_test,
                    "eer_insample": f.eer_insample,
                    "accuracy_at_eer_insample": f.accuracy_insample,
                    "eer_heldout": f.eer_heldout,
                    "accuracy_at_eer_heldout": f.accuracy_heldout,
                    "eer_threshold_insample": f.roc.eer_threshold,
                    "eer_threshold_heldout": f.heldout_threshold,
                }
                for f in self.folds
            ],
            "mean_accuracy_at_eer_insample": self.mean_accuracy,
            "std_accuracy_at_eer_insample": self.std_accuracy,
            "mean_accuracy_at_eer_heldout": self.mean_accuracy_heldout,
            "std_accuracy_at_eer_heldout": self.std_accuracy_heldout,
        }


def kfold_scores(X, labels, folds, rounds: int, n_jobs: int = 1, bank_fingerprint: str = "") -> KFoldReport:
    """Train on all folds but one, score the held-out fold, for every fold.

    ``eer_insample`` picks the EER threshold on the test fold itself;
    ``eer_heldout`` picks it on the training folds and applies it to the test fold.
    """
    X = np.asarray(X, dtype=np.float64)
    pos = _positive_mask(labels)
    folds = np.asarray(folds)
    signed = np.where(pos, 1, -1)
    results = []
    for f in np.unique(folds):
        test = folds == f
        train = ~test
        for name, mask in (("test", test), ("train", train)):
            if pos[mask].all() or not pos[mask].any():
                raise ValueError(f"fold {f} {name} split holds a single label")
        model, _ = adaboost_train(X[train], signed[train], rounds, bank_fingerprint, n_jobs=n_jobs)
        train_roc = roc(model.margin(X[train]), pos[train])
        test_scores = model.margin(X[test])
        test_roc = roc(test_scores, pos[test])
        far, frr = error_rates(test_scores, pos[test], train_roc.eer_threshold)
        results.append(
            FoldResult(int(f), int(train.sum()), int(test.sum()), test_roc, 0.5 * (far + frr), train_roc.eer_threshold)
        )
    return KFoldReport(results)


def convert_lfw_pairs(text: str, root: str, ext: str = ".png") -> PairManifest:
    """Convert the tab-separated LFW ``pairs.txt`` layout to a manifest.

    The first line holds ``n_folds<TAB>n_per_class``; each fold then lists
    ``n_per_class`` matched lines (``name i j``) followed by as many
    mismatched lines (``name1 i name2 j``). Image files are expected at
    ``root/name/name_%04d<ext>``.
    """
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValueError("pairs file must start with 'n_folds n_per_class'")
    n_folds, per_class = (int(v) for v in lines[0])
    body = lines[1:]
    if len(body) != n_folds * 2 * per_class:
        raise ValueError(f"expected {n_folds * 2 * per_class} pair lines, found {len(body)}")

    def image(name, num):
        return os.path.join(root, name, f"{name}_{int(num):04d}{ext}")

    entries = []
    for i, parts in enumerate(body):
        fold = i // (2 * per_class)
        if len(parts) == 3:
            entries.append(PairEntry(image(parts[0], parts[1]), image(parts[0], parts[2]), 1, fold))
        elif len(parts) == 4:
            entries.append(PairEntry(image(parts[0], parts[1]), image(parts[2], parts[3]), 0, fold))
        else:
            raise ValueError(f"pairs line {i + 2}: expected 3 or 4 fields")
    return PairManifest(entries)
