from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDENS = Path(__file__).parent / "goldens"


def pytest_addoption(parser):
    parser.addoption(
        "--update-goldens",
        action="store_true",
        default=False,
        help="rewrite the golden fingerprint hashes from the current renders",
    )


@pytest.fixture
def update_goldens(request):
    return request.config.getoption("--update-goldens")


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def goldens():
    GOLDENS.mkdir(exist_ok=True)
    return GOLDENS
