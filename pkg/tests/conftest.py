# tests/conftest.py
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
# Agregar src al path, igual que main.py
sys.path.insert(0, os.path.join(ROOT, 'src'))
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

CHAIN_FILE = os.path.join(ROOT, 'data', 'chains', 'three_finger_arm.yaml')


@pytest.fixture(scope='session')
def chain_path():
    return CHAIN_FILE


@pytest.fixture(scope='session')
def chain():
    from kinematics import load_chain
    return load_chain(CHAIN_FILE)


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(1234)
