import numpy as np
import pytest

from akdiff.core import build_schedule, fft2c, smaps_multiply, tau_for_acs
from akdiff.simulate import make_mask, make_phantom


@pytest.fixture(scope="session")
def phantom64():
    """Standard acceptance instance: 64x64, 4 coils, seed 11."""
    image, smaps = make_phantom(64, 64, 4, seed=11)
    kspace = fft2c(smaps_multiply(image, smaps))
    return image, smaps, kspace


@pytest.fixture(scope="session")
def sched64():
    return build_schedule(64, 64, 50, 0.01, 1.0, tau_for_acs(64, 16), 2.0)


@pytest.fixture(scope="session")
def mask6x():
    return make_mask("uniform", 64, 64, r=6, acs_lines=16)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
