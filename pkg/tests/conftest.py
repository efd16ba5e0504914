from pathlib import Path

import numpy as np
import pytest

from milqt import TrainConfig, gen_synthetic, load_dataset
from milqt.data import DatasetBundle, SampleRecord, Vocabulary

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def tiny_path():
    return FIXTURES / "tiny.tsv"


@pytest.fixture
def tiny(tiny_path):
    return load_dataset(tiny_path)


def label_bundle(qtypes, answers, P, A, K=2, D_v=3):
    """Bundle with given labels and dummy questions/features."""
    vocab = Vocabulary(["q"])
    feats = np.zeros((K, D_v))
    samples = [
        SampleRecord(f"s{i}", "q", (2,) + (0,) * 11, int(p), ((int(a), 1.0),), None, feats)
        for i, (p, a) in enumerate(zip(qtypes, answers))
    ]
    return DatasetBundle(samples, vocab, [f"a{a}" for a in range(A)], [f"t{p}" for p in range(P)])


@pytest.fixture
def toy_config():
    return TrainConfig(seed=3, d_w=4, d_h=5, d_f=6, rank=3, batch_size=4, epochs=1,
                       hypotheses=("topdown", "stacked2"))


@pytest.fixture
def toy_bundle():
    # P=3, A=5, K=4 toy sizes
    return gen_synthetic(11, 6, 3, 5, 4, 5)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
