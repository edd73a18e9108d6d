import sys
from pathlib import Path

import pytest

from proofopt.backends import BackendConfig

TESTS_DIR = Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"

sys.path.insert(0, str(TESTS_DIR))


def mock_cfg(**options) -> BackendConfig:
    kwargs = {k: options.pop(k) for k in ("max_parallel", "temperature") if k in options}
    return BackendConfig(kind="mock", options=options, **kwargs)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def read_fixture(name: str) -> str:
    return (DATA_DIR / name).read_text()
