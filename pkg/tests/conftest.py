import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from qpdn.data import load_dataset
from qpdn.model import Variant, init_params
from qpdn.train import TrainConfig

DATA = Path(__file__).parent / "data"
ROOT = Path(__file__).resolve().parents[1]
RT_SNIPPETS = ROOT / "data" / "rt_snippets.tsv"

# fixed example sequence so property tests are reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def small_model(variant=Variant.FULL, *, n=4, k=3, vocab=12, labels=2, seed=0, scale=0.5):
    idf = np.linspace(1.0, 3.0, vocab) if Variant(variant) is Variant.IDF_WEIGHTS else None
    return init_params(n, k, vocab, labels, variant, rng=seed, idf=idf, init_scale=scale)


def random_batch(rng, vocab, labels, size=3, max_len=5):
    batch = [list(rng.integers(0, vocab, size=rng.integers(1, max_len + 1))) for _ in range(size)]
    return batch, rng.integers(0, labels, size=size)


@pytest.fixture
def separable():
    return load_dataset(DATA / "separable.tsv")


@pytest.fixture
def separable_config():
    return TrainConfig(
        n=8, k=4, lr=0.05, l2=0.0, batch_size=16, epochs=50, patience=50, dev_fraction=0.0, init_scale=0.5, seed=0
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
