from pathlib import Path

import numpy as np
import pytest

from config import get_settings
from decomposition import read_parameter_table
from unitaries import load_matrix, repair_unitary

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# printed parameter table as (t, alpha, beta) per element index
_PRINTED_TABLE = {
    1: (0.19, 0.0, 0.0),
    2: (0.40, 0.64, 0.0),
    3: (0.48, 0.0, 1.37),
    4: (0.44, 0.0, 1.10),
    5: (0.55, 2.21, 0.0),
    6: (0.54, 0.0, 1.02),
    7: (0.51, 2.93, 0.0),
    8: (0.76, 1.08, 0.0),
    9: (0.99, 2.58, 0.0),
    10: (0.95, 0.0, 0.0),
}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def sampled_path() -> Path:
    return FIXTURES / "sampled_unitary.json"


@pytest.fixture
def reconstructed_path() -> Path:
    return FIXTURES / "reconstructed_unitary.json"


@pytest.fixture
def table_path() -> Path:
    return FIXTURES / "chip_parameters.csv"


@pytest.fixture
def sampled_raw(sampled_path) -> np.ndarray:
    return load_matrix(sampled_path)


@pytest.fixture
def sampled(sampled_raw) -> np.ndarray:
    return repair_unitary(sampled_raw)


@pytest.fixture
def reconstructed_raw(reconstructed_path) -> np.ndarray:
    return load_matrix(reconstructed_path)


@pytest.fixture
def printed_layout(table_path):
    return read_parameter_table(table_path)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2025)


@pytest.fixture
def fresh_settings():
    """Clear the cached settings before and after a test that edits the environment."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def splitter() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)


@pytest.fixture
def printed_table() -> dict[int, tuple[float, float, float]]:
    return dict(_PRINTED_TABLE)
