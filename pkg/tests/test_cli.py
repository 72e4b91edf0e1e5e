import json
import os
import subprocess
import sys

import numpy as np
import pytest

from crossface.boosting import load_model
from crossface.cli import main
from crossface.config import RunConfig
from crossface.evaluation import PairEntry, PairManifest, read_manifest, write_manifest
from crossface.features import FeatureBank


@pytest.fixture(scope="module")
def trained(manifest_path, small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    model = out / "model.json"
    assert main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
                 "--rounds", "5", "--model", str(model), "--out", str(out / "log.tsv")]) == 0
    return model


class TestTrain:
    def test_model_and_sidecar(self, trained, small_config):
        model = load_model(trained)
        assert len(model.weak) == 5
        sidecar = RunConfig.load(str(trained) + ".config")
        assert sidecar.rounds == 5 and sidecar.window_w == 24
        bank = RunConfig.load(small_config).bank()
        assert model.bank_fingerprint == bank.fingerprint()
        log = (trained.parent / "log.tsv").read_text().splitlines()
        assert log[0].startswith("round\tfeature_id\tkind")
        assert len(log) == 6

    def test_log_on_stderr(self, manifest_path, small_config, tmp_path, capsys):
        main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
              "--rounds", "2", "--model", str(tmp_path / "m.json")])
        err = capsys.readouterr().err
        assert "round 1: feature" in err and "eps=" in err and "alpha=" in err

    @pytest.mark.parametrize("threads", ["1", "3"])
    def test_byte_identical(self, manifest_path, small_config, tmp_path, threads):
        paths = []
        for i in range(2):
            p = tmp_path / f"m{i}.json"
            assert main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
                         "--rounds", "4", "--seed", "7", "--threads", threads, "--model", str(p)]) == 0
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_thread_count_does_not_change_model(self, manifest_path, small_config, tmp_path):
        for t in ("1", "0"):
            main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
                  "--rounds", "3", "--threads", t, "--model", str(tmp_path / f"t{t}.json")])
        assert (tmp_path / "t1.json").read_bytes() == (tmp_path / "t0.json").read_bytes()

    def test_missing_image(self, small_config, tmp_path, capsys):
        write_manifest(PairManifest([PairEntry(str(tmp_path / "ghost.pgm"), str(tmp_path / "ghost2.pgm"), 1)]),
                       tmp_path / "bad.tsv")
        rc = main(["train", "--pairs", str(tmp_path / "bad.tsv"), "--config", str(small_config),
                   "--rounds", "2", "--model", str(tmp_path / "m.json")])
        assert rc != 0
        assert "ghost.pgm" in capsys.readouterr().err

    def test_rounds_required(self, manifest_path, small_config, tmp_path, capsys):
        rc = main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
                   "--model", str(tmp_path / "m.json")])
        assert rc != 0 and "rounds" in capsys.readouterr().err


class TestEval:
    def test_report(self, trained, manifest_path, tmp_path):
        out = tmp_path / "rep"
        assert main(["eval", "--pairs", str(manifest_path), "--model", str(trained), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_pos"] == 40 and summary["n_neg"] == 40
        assert summary["accuracy_at_eer_insample"] == 100.0 - summary["eer_insample"]
        assert summary["accuracy_at_eer_insample"] >= 90.0
        csv = (out / "roc.csv").read_text().splitlines()
        assert csv[0] == "threshold,far,frr,tpr"

    def test_fingerprint_mismatch(self, trained, manifest_path, tmp_path, capsys):
        cfg = tmp_path / "other.cfg"
        cfg.write_text("window_w=24\nwindow_h=24\nmin_size=8\nposition_stride=4\nsize_stride=8\n")
        rc = main(["eval", "--pairs", str(manifest_path), "--model", str(trained), "--config", str(cfg)])
        assert rc != 0 and "fingerprint" in capsys.readouterr().err


class TestKFold:
    def test_fold_count(self, manifest_path, small_config, tmp_path):
        out = tmp_path / "kf"
        assert main(["kfold", "--pairs", str(manifest_path), "--config", str(small_config),
                     "--k", "4", "--rounds", "3", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["k"] == 4 and len(summary["folds"]) == 4
        assert sum(f["n_test"] for f in summary["folds"]) == 80
        assert {"eer_insample", "eer_heldout"} <= set(summary["folds"][0])
        assert len(list(out.glob("roc_fold*.csv"))) == 4

    def test_identity_disjoint(self, corpus_dir, small_config, tmp_path, capsys):
        root, _ = corpus_dir
        m = tmp_path / "p.tsv"
        assert main(["pairs", "--corpus", str(root), "--n-pos", "30", "--n-neg", "30",
                     "--k", "2", "--identity-disjoint", "--out", str(m)]) == 0
        assert main(["kfold", "--pairs", str(m), "--config", str(small_config), "--k", "2", "--rounds", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["k"] == 2


class TestPredict:
    def test_same_image(self, trained, corpus_dir, capsys):
        _, listing = corpus_dir
        img = str(listing["id000"][0])
        assert main(["predict", img, img, "--model", str(trained)]) == 0
        out = capsys.readouterr().out.strip()
        assert out.startswith("margin=") and out.endswith("decision=same")

    def test_different_identity(self, trained, corpus_dir, capsys):
        _, listing = corpus_dir
        main(["predict", str(listing["id000"][0]), str(listing["id003"][1]), "--model", str(trained)])
        assert capsys.readouterr().out.strip().endswith("decision=different")

    def test_missing_model(self, corpus_dir, tmp_path, capsys):
        _, listing = corpus_dir
        img = str(listing["id000"][0])
        assert main(["predict", img, img, "--model", str(tmp_path / "none.json")]) != 0
        assert "model file not found" in capsys.readouterr().err

    def test_mismatched_bank(self, trained, corpus_dir, tmp_path, capsys):
        _, listing = corpus_dir
        img = str(listing["id000"][0])
        cfg = tmp_path / "c.cfg"
        cfg.write_text("window_w=32\nwindow_h=32\n")
        assert main(["predict", img, img, "--model", str(trained), "--config", str(cfg)]) != 0
        assert "fingerprint mismatch" in capsys.readouterr().err


class TestDumps:
    def test_bank(self, small_config, tmp_path):
        out = tmp_path / "bank.txt"
        assert main(["bank", "--config", str(small_config), "--out", str(out)]) == 0
        bank = FeatureBank.from_text(out.read_text())
        assert bank == RunConfig.load(small_config).bank()
        first = out.read_text().splitlines()[2].split()
        assert first[1] == "HaarTwoH" and len(first) == 6

    def test_extract(self, manifest_path, small_config, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["extract", "--pairs", str(manifest_path), "--config", str(small_config), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        n_feat = len(RunConfig.load(small_config).bank())
        assert len(lines) == 81
        assert lines[0].split(",")[:4] == ["path1", "path2", "label", "f0"]
        assert len(lines[1].split(",")) == 3 + n_feat

    def test_bench(self, tmp_path, capsys):
        cfg = tmp_path / "b.cfg"
        cfg.write_text("window_w=24\nwindow_h=24\nmin_size=6\nposition_stride=3\nsize_stride=6\n")
        assert main(["bench", "--config", str(cfg), "--trials", "2"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["agreement"] is True
        assert report["bank_size"] == len(RunConfig.load(cfg).bank())
        assert report["speedup"] > 1.0


class TestPairsAndSynth:
    def test_synth_then_pairs(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "c"), "--identities", "3", "--variants", "4",
                     "--size", "16"]) == 0
        assert len(os.listdir(tmp_path / "c")) == 3
        assert main(["pairs", "--corpus", str(tmp_path / "c"), "--n-pos", "5", "--n-neg", "5",
                     "--seed", "1", "--out", str(tmp_path / "m.tsv")]) == 0
        m = read_manifest(tmp_path / "m.tsv")
        assert len(m) == 10 and all(os.path.exists(e.path1) for e in m.entries)

    def test_lfw_convert(self, tmp_path, capsys):
        src = tmp_path / "pairs.txt"
        src.write_text("1\t1\nAnn\t1\t2\nAnn\t1\tBob\t1\n")
        assert main(["lfw-convert", str(src), "--root", "/lfw"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].endswith("\t1\t0") and lines[1].endswith("\t0\t0")


class TestConfig:
    def test_roundtrip(self):
        cfg = RunConfig(rounds=12, seed=3, threads=0)
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown key"):
            RunConfig.from_text("windw=3\n")

    def test_invalid(self):
        with pytest.raises(ValueError):
            RunConfig.from_text("rounds=0\n")

    def test_flag_overrides(self):
        cfg = RunConfig.from_text("rounds=3\nseed=1\n").replace(rounds=9, seed=None)
        assert cfg.rounds == 9 and cfg.seed == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "crossface.cli", "bank", "--config", os.devnull],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# window 64 64")
    assert len(proc.stdout.splitlines()) == 27600 + 2


def test_outputs_create_parent_dirs(manifest_path, small_config, tmp_path):
    model = tmp_path / "a" / "b" / "model.json"
    assert main(["train", "--pairs", str(manifest_path), "--config", str(small_config),
                 "--rounds", "2", "--model", str(model), "--out", str(tmp_path / "logs" / "t.tsv")]) == 0
    assert model.exists() and (tmp_path / "logs" / "t.tsv").exists()
    assert main(["extract", "--pairs", str(manifest_path), "--config", str(small_config),
                 "--out", str(tmp_path / "x" / "f.csv")]) == 0


def test_relative_corpus_paths_roundtrip(tmp_path, monkeypatch, small_config):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--out", "data/corpus", "--identities", "3", "--variants", "4", "--size", "24"]) == 0
    assert main(["pairs", "--corpus", "data/corpus", "--n-pos", "6", "--n-neg", "6", "--out", "data/p.tsv"]) == 0
    assert main(["train", "--pairs", "data/p.tsv", "--config", str(small_config), "--rounds", "2",
                 "--model", "out/m.json"]) == 0
