import sys
from pathlib import Path

import pytest

# Make the sibling oracles module importable from every test file.
sys.path.insert(0, str(Path(__file__).parent))

from lmselect import EMOptions, ModelSpec, scenario_preset  # noqa: E402


@pytest.fixture(scope="session")
def scenario1():
    return scenario_preset(1, n=250, r=1)


@pytest.fixture(scope="session")
def fast_em():
    """Small multistart budget for tests that only need a reasonable fit."""
    return EMOptions(max_iter=500, tol=1e-8, n_random_starts=1, seed=123)


@pytest.fixture
def spec22():
    return ModelSpec(k=2, T=2, categories=(2,))
