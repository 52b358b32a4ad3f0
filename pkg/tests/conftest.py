from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from src.linalg_core import HilbertSpace, StateVector
from src.utils import counter_rng

settings.register_profile("imlab", max_examples=30, deadline=None)
settings.load_profile("imlab")

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "config" / "scenarios"


@pytest.fixture
def rng() -> np.random.Generator:
    return counter_rng(1234)


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


def basis(dim: int, index: int) -> StateVector:
    return StateVector.basis(HilbertSpace.standard(dim), index)


def state(amplitudes) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex)
    return StateVector.from_amplitudes(HilbertSpace.standard(len(amps)), amps)
