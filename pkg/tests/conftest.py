import numpy as np
import pytest

from dainr.phantom import cardiac_phantom, generate_coil_maps, generate_phantom, retrospective_undersample


@pytest.fixture(scope="session")
def small_acquisition():
    """N=32, 8 frames, 2 coils, 5 spokes (AF ~ 10)."""
    gt = generate_phantom(cardiac_phantom(32, 8))
    maps = generate_coil_maps(32, 2, seed=3)
    return gt, maps, retrospective_undersample(gt, maps, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
