import pathlib

import pytest
from hypothesis import settings

from symval.ir import load_program

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


def corpus_files():
    return sorted(CORPUS.glob("*.ir"))


def load(path):
    return load_program(pathlib.Path(path).read_text())


@pytest.fixture
def corpus():
    return {p.stem: load(p) for p in corpus_files()}
