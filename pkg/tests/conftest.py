from pathlib import Path

import pytest

from advm.model import parse_activity, parse_file

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixture_path():
    return lambda name: FIXTURES / name


@pytest.fixture
def load():
    return lambda name: parse_file(FIXTURES / name)


@pytest.fixture
def parse():
    return parse_activity
