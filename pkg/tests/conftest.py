import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kmps.hamiltonian import SchwingerParams, SineGordonParams
from kmps.layout import ModeLayout, ModelKind


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def sg_small():
    """108-dimensional sine-Gordon layout for dense cross-checks."""
    layout = ModeLayout(ModelKind.SINE_GORDON, 2, 2, 1, 15.0)
    params = SineGordonParams(delta_dim=0.25, length_L=15.0)
    return layout, params


@pytest.fixture
def ms_small():
    """108-dimensional massive-Schwinger layout for dense cross-checks."""
    layout = ModeLayout(ModelKind.MASSIVE_SCHWINGER, 2, 2, 2, 8.0)
    params = SchwingerParams(fermion_mass=0.35, length_L=8.0, theta=np.pi)
    return layout, params


@pytest.fixture
def sg_tiny():
    """Three-mode sine-Gordon layout (dense dim 27)."""
    layout = ModeLayout(ModelKind.SINE_GORDON, 1, 2, 1, 10.0)
    params = SineGordonParams(delta_dim=0.3, length_L=10.0)
    return layout, params
