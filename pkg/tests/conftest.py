"""Shared fixtures for the spotbot test suite."""

import json
from pathlib import Path

import numpy as np
import pytest

from spotbot.corpus import Corpus, DocLabel

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / 'fixtures'
MINI_CORPUS = ROOT / 'data' / 'mini_corpus'

PROPERTY_CASES = 500


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mini_corpus_dir() -> Path:
    return MINI_CORPUS


def load_fixture(group: str, name: str):
    with open(FIXTURES / group / name, 'r', encoding='utf-8') as f:
        return json.load(f)


@pytest.fixture
def small_corpus() -> Corpus:
    """Three short labelled documents over a six-word vocabulary."""
    return Corpus.build([
        ('h1', 'the cat sat on the mat'.split(), DocLabel.HUMAN),
        ('h2', 'the dog sat on the log'.split(), DocLabel.HUMAN),
        ('b1', 'the cat sat the cat sat'.split(), DocLabel.BOT_SIMPLE),
    ])


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> Path:
    """Run inside a temporary directory so log files stay out of the tree."""
    monkeypatch.chdir(tmp_path)
    return tmp_path
