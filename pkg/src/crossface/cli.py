"""Command-line interface: ``crossface <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .boosting import BankMismatchError, adaboost_train, load_model, save_model
from .config import RunConfig
from .evaluation import (
    build_pairs,
    convert_lfw_pairs,
    error_rates,
    load_corpus,
    read_manifest,
    roc,
    write_manifest,
)
from .features import (
    FeatureKind,
    extract_all,
    make_pair_integrals,
    naive_extract,
)
from .image import GrayImage, canonicalize, load_image
from .pipeline import kfold_evaluate, manifest_features
from .synthetic import make_corpus, write_corpus

logger = logging.getLogger("crossface")


class CliError(Exception):
    pass


def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    if path is None and getattr(args, "model", None):
        sidecar = sidecar_path(args.model)
        if os.path.exists(sidecar):
            path = sidecar
    cfg = RunConfig.load(path) if path else RunConfig()
    return cfg.replace(
        rounds=getattr(args, "rounds", None),
        seed=getattr(args, "seed", None),
        threads=getattr(args, "threads", None),
    )


def sidecar_path(model_path: str) -> str:
    return model_path + ".config"


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _write_or_print(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        _ensure_parent(out)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_model_for(args, bank):
    if not os.path.exists(args.model):
        raise CliError(f"model file not found: {args.model}")
    model = load_model(args.model)
    model.check_bank(bank.fingerprint())
    return model


def cmd_train(args) -> int:
    cfg = _config(args)
    if cfg.rounds is None:
        raise CliError("--rounds (or rounds= in the config) is required for training")
    manifest = read_manifest(args.pairs)
    _ensure_parent(args.model)  # fail before training, not after
    bank = cfg.bank()
    X = manifest_features(manifest, bank, n_jobs=cfg.threads)
    y = np.where(manifest.labels == 1, 1, -1)
    log_lines = ["round\tfeature_id\tkind\tx\ty\tw\th\terror\talpha"]

    def report(rec):
        d = bank[rec.feature_id]
        x, yy, w, h = d.frame
        logger.info(
            "round %d: feature %d %s rect=(%d,%d,%d,%d) eps=%.6g alpha=%.6g",
            rec.round, rec.feature_id, d.kind.name, x, yy, w, h, rec.error, rec.alpha,
        )
        log_lines.append(
            f"{rec.round}\t{rec.feature_id}\t{d.kind.name}\t{x}\t{yy}\t{w}\t{h}\t{rec.error!r}\t{rec.alpha!r}"
        )

    model, _ = adaboost_train(
        X, y, cfg.rounds, bank_fingerprint=bank.fingerprint(), n_jobs=cfg.threads, callback=report
    )
    save_model(model, args.model)
    with open(sidecar_path(args.model), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.to_text())
        fh.write(f"# bank_fingerprint {bank.fingerprint()}\n")
    if args.out:
        _write_or_print("\n".join(log_lines) + "\n", args.out)
    logger.info("wrote %s (%d stumps)", args.model, len(model.weak))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    bank = cfg.bank()
    model = _load_model_for(args, bank)
    manifest = read_manifest(args.pairs)
    X = manifest_features(manifest, bank, n_jobs=cfg.threads)
    labels = manifest.labels == 1
    margins = model.margin(X)
    curve = roc(margins, labels)
    far, frr = error_rates(margins, labels, model.decision_threshold)
    summary = {
        "n_pairs": len(manifest),
        "n_pos": curve.n_pos,
        "n_neg": curve.n_neg,
        "eer_insample": curve.eer,
        "accuracy_at_eer_insample": curve.accuracy_at_eer,
        "eer_threshold": curve.eer_threshold,
        "decision_threshold": model.decision_threshold,
        "far_at_decision_threshold": far,
        "frr_at_decision_threshold": frr,
    }
    text = json.dumps(summary, indent=2) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_or_print(curve.to_csv(), os.path.join(args.out, "roc.csv"))
        _write_or_print(text, os.path.join(args.out, "summary.json"))
    else:
        sys.stdout.write(text)
    return 0


def cmd_kfold(args) -> int:
    cfg = _config(args)
    if cfg.rounds is None:
        raise CliError("--rounds (or rounds= in the config) is required for k-fold evaluation")
    manifest = read_manifest(args.pairs)
    report = kfold_evaluate(manifest, args.k, cfg, identity_disjoint=args.identity_disjoint)
    text = json.dumps(report.summary(), indent=2) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for f in report.folds:
            _write_or_print(f.roc.to_csv(), os.path.join(args.out, f"roc_fold{f.fold}.csv"))
        _write_or_print(text, os.path.join(args.out, "summary.json"))
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    cfg = _config(args)
    bank = cfg.bank()
    model = _load_model_for(args, bank)
    a = canonicalize(load_image(args.image1), cfg.window_w, cfg.window_h)
    b = canonicalize(load_image(args.image2), cfg.window_w, cfg.window_h)
    margin = float(model.margin(extract_all(make_pair_integrals(a, b), bank)))
    decision = "same" if margin >= model.decision_threshold else "different"
    print(f"margin={margin!r} decision={decision}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    bank = cfg.bank()
    manifest = read_manifest(args.pairs)
    X = manifest_features(manifest, bank, n_jobs=cfg.threads)
    if args.out not in (None, "-"):
        _ensure_parent(args.out)
    header = "path1,path2,label," + ",".join(f"f{i}" for i in range(len(bank)))
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8", newline="\n")
    try:
        out.write(header + "\n")
        for e, row in zip(manifest.entries, X):
            out.write(f"{e.path1},{e.path2},{e.label}," + ",".join(repr(float(v)) for v in row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bank(args) -> int:
    bank = _config(args).bank()
    _write_or_print(bank.to_text(), args.out)
    logger.info("bank: %d descriptors, fingerprint %s", len(bank), bank.fingerprint())
    return 0


def run_bench(cfg: RunConfig, trials: int = 3, seed: int = 0) -> dict:
    """Time integral-image extraction against direct pixel summation on random pairs."""
    bank = cfg.bank()
    rng = np.random.default_rng(seed)
    pairs = [
        (GrayImage(rng.random((cfg.window_h, cfg.window_w))), GrayImage(rng.random((cfg.window_h, cfg.window_w))))
        for _ in range(trials)
    ]
    extract_all(make_pair_integrals(*pairs[0]), bank)  # builds the cached lookup plan

    fast_times, naive_times = [], []
    haar = bank.kinds != FeatureKind.Ncc
    max_haar_err = 0.0
    max_ncc_rel = 0.0
    agree = True
    for a, b in pairs:
        t0 = time.perf_counter()
        fast = extract_all(make_pair_integrals(a, b), bank)
        fast_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        slow = naive_extract(a.pixels, b.pixels, bank)
        naive_times.append(time.perf_counter() - t0)
        max_haar_err = max(max_haar_err, float(np.max(np.abs(fast[haar] - slow[haar]), initial=0.0)))
        f, s = fast[~haar], slow[~haar]
        if f.size:
            nz = s != 0
            max_ncc_rel = max(max_ncc_rel, float(np.max(np.abs(f[nz] - s[nz]) / np.abs(s[nz]), initial=0.0)))
            agree &= bool(np.all(f[~nz] == 0.0))
    agree &= max_haar_err <= 1e-6 and max_ncc_rel <= 1e-9
    fast_us = 1e6 * float(np.median(fast_times))
    naive_us = 1e6 * float(np.median(naive_times))
    speedup = naive_us / fast_us
    return {
        "bank_size": len(bank),
        "trials": trials,
        "fast_us_per_pair": fast_us,
        "naive_us_per_pair": naive_us,
        "speedup": speedup,
        "max_haar_abs_error": max_haar_err,
        "max_ncc_rel_error": max_ncc_rel,
        "agreement": agree,
        "soft_target_fast_under_50ms": fast_us < 50_000,
        "soft_target_speedup_over_5x": speedup > 5.0,
    }


def cmd_bench(args) -> int:
    cfg = _config(args)
    report = run_bench(cfg, trials=args.trials, seed=cfg.seed)
    sys.stdout.write(json.dumps(report, indent=2) + "\n")
    if not report["agreement"]:
        logger.error("integral-image and naive feature values disagree")
        return 1
    return 0


def cmd_pairs(args) -> int:
    cfg = _config(args)
    corpus = load_corpus(args.corpus)
    manifest = build_pairs(
        corpus, args.n_pos, args.n_neg, seed=cfg.seed, k=args.k, identity_disjoint=args.identity_disjoint
    )
    if manifest.replacement:
        logger.warning("pool exhausted, sampled %s with replacement", ", ".join(manifest.replacement))
    if args.out in (None, "-"):
        sys.stdout.write(manifest.to_text())
    else:
        _ensure_parent(args.out)
        write_manifest(manifest, args.out)
    return 0


def cmd_synth(args) -> int:
    corpus = make_corpus(args.identities, args.variants, args.size, args.size, args.noise, args.seed)
    write_corpus(corpus, args.out)
    logger.info("wrote %d identities x %d images to %s", args.identities, args.variants, args.out)
    return 0


def cmd_lfw_convert(args) -> int:
    with open(args.lfw_pairs, encoding="utf-8") as fh:
        manifest = convert_lfw_pairs(fh.read(), args.root, args.ext)
    if args.out in (None, "-"):
        sys.stdout.write(manifest.to_text())
    else:
        _ensure_parent(args.out)
        write_manifest(manifest, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossface", description="Face verification with boosted cross-image features."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, rounds=False, model=False, pairs=False):
        p.add_argument("--config", help="key=value run config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
        if rounds:
            p.add_argument("--rounds", type=int, help="boosting rounds")
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
        if pairs:
            p.add_argument("--pairs", required=True, help="pair manifest")

    p = sub.add_parser("train", help="train a model on a pair manifest")
    common(p, rounds=True, model=True, pairs=True)
    p.add_argument("--out", help="write the per-round training log (TSV) here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ROC and EER of a model on a pair manifest")
    common(p, model=True, pairs=True)
    p.add_argument("--out", help="directory for roc.csv and summary.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kfold", help="k-fold cross-validated EER")
    common(p, rounds=True, pairs=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--identity-disjoint", action="store_true")
    p.add_argument("--out", help="directory for per-fold ROC CSVs and summary.json")
    p.set_defaults(func=cmd_kfold)

    p = sub.add_parser("predict", help="verify one image pair")
    p.add_argument("image1")
    p.add_argument("image2")
    common(p, model=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("extract", help="dump feature vectors as CSV")
    common(p, pairs=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("bank", help="dump the feature descriptor list")
    common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("bench", help="integral-image vs naive extraction timing")
    common(p)
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pairs", help="sample a pair manifest from an identity-per-directory corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--n-pos", type=int, required=True)
    p.add_argument("--n-neg", type=int, required=True)
    p.add_argument("--k", type=int, help="assign fold ids for k folds")
    p.add_argument("--identity-disjoint", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("synth", help="write a synthetic identity corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=10)
    p.add_argument("--variants", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lfw-convert", help="convert an LFW pairs.txt to a manifest")
    p.add_argument("lfw_pairs")
    p.add_argument("--root", required=True, help="directory holding <name>/<name>_NNNN images")
    p.add_argument("--ext", default=".png")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lfw_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except (CliError, BankMismatchError, FileNotFoundError, ValueError, OSError, RuntimeError) as exc:
        msg = str(exc)
        if isinstance(exc, FileNotFoundError) and exc.filename and exc.filename not in msg:
            msg = f"{msg}: {exc.filename}"
        print(f"crossface: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
