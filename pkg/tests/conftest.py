from pathlib import Path

import pytest

from ghabmc.flatten import flatten_gha
from ghabmc.model import parse_model

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"
GOLDEN = Path(__file__).resolve().parent / "golden"


def load(name: str):
    return parse_model((MODELS / name).read_text())


@pytest.fixture
def fig1():
    return load("fig1/fig1.gha")


@pytest.fixture
def usv():
    return load("usv-desk/usv.gha")


@pytest.fixture
def usv_flat(usv):
    return flatten_gha(usv)


# one line per acceptance criterion, printed at the end of every run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
