import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nvcalib.presets import OVERLAPPED_FIELD, SEPARATED_FIELD, lab_axes

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def axes():
    return lab_axes()


@pytest.fixture(scope="session")
def overlapped_field():
    return OVERLAPPED_FIELD


@pytest.fixture(scope="session")
def separated_field():
    return SEPARATED_FIELD


def lorentzian_sum(freqs, centers, linewidth, contrast, f0=1.0, hf=2.16e6):
    """Independent re-statement of the four-orientation hyperfine profile."""
    freqs = np.asarray(freqs, dtype=float)
    hw = linewidth / 2.0
    total = np.zeros_like(freqs)
    for nu in centers:
        for j in (-1, 0, 1):
            total += hw * hw / (hw * hw + (freqs - (nu - j * hf)) ** 2)
    return f0 * (1.0 - contrast * total)
