from pathlib import Path

import numpy as np
import pytest

from crrlab.corpus import load_dataset
from crrlab.text import SentimentLexicon

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def lexicon() -> SentimentLexicon:
    return SentimentLexicon.load()


@pytest.fixture(scope="session")
def train_set():
    return load_dataset(FIXTURES / "train.jsonl", split="train")


@pytest.fixture(scope="session")
def arts_set():
    return load_dataset(FIXTURES / "test_arts.jsonl", kind="arts")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
