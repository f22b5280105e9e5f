# scripts/conftest.py
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import cgap_settings as settings
from cgap_text import parse_program
from grounder import ground

PROGRAMS = Path(__file__).parent.parent / "programs"


def load_program(name: str):
    return parse_program((PROGRAMS / name).read_text(encoding="utf-8"))


@pytest.fixture(autouse=True)
def restore_settings():
    previous = settings.current()
    yield
    settings.apply_overrides(previous)


@pytest.fixture
def programs_dir() -> Path:
    return PROGRAMS


@pytest.fixture
def asus_mac():
    return ground(load_program("asus_mac.cgap"))


@pytest.fixture
def two_eq():
    """Mac is option 1, Asus option 2."""
    return ground(load_program("two_equilibria.cgap"))


@pytest.fixture
def two_eq_asus_first():
    return ground(load_program("two_equilibria_asus_first.cgap"))


@pytest.fixture
def cyclic():
    return ground(load_program("cyclic_three.cgap"))


@pytest.fixture
def unrolling_demo():
    return ground(load_program("unrolling_demo.cgap"))
