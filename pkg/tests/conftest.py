import os

import numpy as np
import pytest

from bbmlab.fronts import constants
from bbmlab.measures import Atoms, BranchingModel
from bbmlab.spectral import principal_eigenvalue


def accept_scale() -> float:
    """Replicate-count scale for the acceptance suite (1.0 = spec counts)."""
    return float(os.environ.get("BBMLAB_ACCEPT_SCALE", "1.0"))


@pytest.fixture(scope="session")
def unit_atom_model():
    return BranchingModel(Atoms(((0.0, 1.0),)), (1.0,))


@pytest.fixture(scope="session")
def unit_atom_spectral():
    return principal_eigenvalue([(0.0, 1.0)], with_lambda2=False)


@pytest.fixture(scope="session")
def unit_atom_constants(unit_atom_spectral):
    return constants(unit_atom_spectral, [(0.0, 1.0)])


@pytest.fixture(scope="session")
def critical_atom_model():
    return BranchingModel(Atoms(((0.0, 1.0),)), (0.5,))


def se_dev(sample: np.ndarray, target: float) -> float:
    """Deviation of the sample mean from target in standard-error units."""
    se = sample.std(ddof=1) / np.sqrt(sample.size)
    return abs(float(sample.mean()) - target) / se
