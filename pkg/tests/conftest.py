import numpy as np
import pytest

from poissonpalm import IntensitySpec, QuadratureSpec, Window
from poissonpalm.catalog import make_intensity


@pytest.fixture
def unit_window():
    return Window.unit(1)


@pytest.fixture
def unit_intensity(unit_window):
    """Unit-mass uniform intensity on [0, 1] (fast direct sampler)."""
    return make_intensity("constant", {"level": 1.0}, unit_window)


@pytest.fixture
def linear_intensity(unit_window):
    """Density x on [0, 1]; mass 1/2; exercises the rejection sampler."""
    return IntensitySpec(
        unit_window, lambda p: p[:, 0].copy(), density_bound=1.0
    )


@pytest.fixture
def quad():
    return QuadratureSpec()
