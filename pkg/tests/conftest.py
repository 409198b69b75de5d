"""Shared fixtures for the weedbot test suite."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import Config, set_config
from firmware.builders import build_assembly
from firmware.kernel import SimKernel


@pytest.fixture(autouse=True)
def fresh_config():
    """Every test starts from the default constants."""
    set_config(Config())
    yield
    set_config(Config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def kernel():
    return SimKernel(record_trace=True)


@pytest.fixture
def assembly():
    with build_assembly(timing='off') as built:
        yield built
