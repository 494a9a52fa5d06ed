import json

import numpy as np
import pytest

from file_handlers import ConfigLoader


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def phase_equal(u, v, atol=1e-9):
    """True when two unitaries agree up to a global phase"""
    overlap = np.trace(np.asarray(u).conj().T @ np.asarray(v))
    return abs(abs(overlap) - u.shape[0]) < atol


@pytest.fixture
def write_config(tmp_path):
    """Write a raw experiment config to disk and return its path"""
    def write(raw, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return str(path)
    return write


@pytest.fixture
def resolve():
    return ConfigLoader.resolve
