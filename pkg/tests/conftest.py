import json
from pathlib import Path

import numpy as np
import pytest

from submax.matrix import GaussianMatrix

FIXTURE_DIR = Path(__file__).parent.parent / "fixtures"
SCHEMA_DIR = Path(__file__).parent.parent / "submax" / "schemas"

IGP_EXAMPLE = [
    [3, 1, 2, 0],
    [0, 0, 0, 0],
    [1, 0, 5, 1],
    [4, 0, 0, 1],
]
LAS_EXAMPLE = [
    [1, 4, 0],
    [0, 2, 9],
    [3, 0, 5],
]
GREEDY_EXAMPLE = [
    [1, 0.6, 0],
    [0.7, 0.9, 0],
    [0, 0, 1],
]


def block_matrix(n: int = 6, k: int = 3, value: float = 10.0) -> GaussianMatrix:
    """Zero matrix with a `k x k` block of `value` in the top left corner."""
    arr = np.zeros((n, n))
    arr[:k, :k] = value
    return GaussianMatrix.from_array(arr)


def load_schema(name: str) -> dict:  # noqa: D103
    return json.loads((SCHEMA_DIR / f"{name}.json").read_text())


@pytest.fixture
def igp_matrix() -> GaussianMatrix:
    return GaussianMatrix.from_array(IGP_EXAMPLE)


@pytest.fixture
def las_matrix() -> GaussianMatrix:
    return GaussianMatrix.from_array(LAS_EXAMPLE)


@pytest.fixture
def greedy_matrix() -> GaussianMatrix:
    return GaussianMatrix.from_array(GREEDY_EXAMPLE)


@pytest.fixture
def igp_fixture_csv() -> Path:
    return FIXTURE_DIR / "igp_example.csv"


@pytest.fixture
def las_fixture_csv() -> Path:
    return FIXTURE_DIR / "las_example.csv"


@pytest.fixture
def greedy_fixture_csv() -> Path:
    return FIXTURE_DIR / "greedy_example.csv"
