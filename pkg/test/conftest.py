import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from geometry import JFamilySpec, a0_preset, build_structure


@pytest.fixture
def flat_structure():
    return build_structure(JFamilySpec(n=2))


@pytest.fixture
def perturbed_structure():
    return build_structure(JFamilySpec(n=2, epsilon=0.4, wave_vector=[1, 0, 0, 0],
                                       A0=a0_preset("plane2-shear", 2)))


@pytest.fixture
def surface_structure():
    return build_structure(JFamilySpec(n=1, epsilon=0.7, wave_vector=[1, 2],
                                       A0=a0_preset("plane1-shear", 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
