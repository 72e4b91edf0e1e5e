import numpy as np
import pytest

from crossface.evaluation import build_pairs, write_manifest
from crossface.synthetic import make_corpus, write_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Small synthetic corpus on disk: 6 identities x 8 images, 24x24."""
    root = tmp_path_factory.mktemp("corpus")
    listing = write_corpus(make_corpus(6, 8, 24, 24, noise=0.05, seed=3), root)
    return root, listing


@pytest.fixture(scope="session")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.cfg"
    path.write_text("window_w=24\nwindow_h=24\nmin_size=6\nposition_stride=3\nsize_stride=6\n")
    return path


@pytest.fixture(scope="session")
def manifest_path(corpus_dir, tmp_path_factory):
    _, listing = corpus_dir
    path = tmp_path_factory.mktemp("pairs") / "pairs.tsv"
    write_manifest(build_pairs(listing, 40, 40, seed=5), path)
    return path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
