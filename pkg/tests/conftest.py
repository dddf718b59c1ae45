from pathlib import Path

import pytest

from unhalt import frontend

REPO = Path(__file__).resolve().parents[1]
CORPUS = REPO / "corpus"
DATA = Path(__file__).resolve().parent / "data"


def corpus_path(name: str) -> Path:
    return CORPUS / name


def load_corpus_program(name: str):
    return frontend.parse_file(corpus_path(name))


def load_corpus_system(name: str):
    return frontend.compile_file(corpus_path(name))


@pytest.fixture(scope="session")
def relay_system():
    """Nondeterministic relay: outer re-arm, inner climb (two variables)."""
    return load_corpus_system("nt_ndet_relay.prog")


@pytest.fixture(scope="session")
def race_system():
    """Counter race with the fuse at n = 100 (three variables)."""
    return load_corpus_system("nt_counter_race.prog")


@pytest.fixture(scope="session")
def climb_system():
    """Deterministic tenfold climb (two variables)."""
    return load_corpus_system("nt_tenfold_climb.prog")
