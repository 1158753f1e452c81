import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ekch.grid import TorusGrid
from ekch.mollifier import build_kernel
from ekch.potential import builtin_double_well

settings.register_profile("ekch", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ekch")


@pytest.fixture
def grid1():
    return TorusGrid(1, 64)


@pytest.fixture
def grid2():
    return TorusGrid(2, 32)


@pytest.fixture
def kern1(grid1):
    return build_kernel("quartic", 0.125, grid1)


@pytest.fixture
def double_well():
    return builtin_double_well()


def smooth_density(grid, mean=0.5, amp=0.1):
    x = grid.coords[0]
    out = mean + amp * np.cos(2 * np.pi * x / grid.L) + 0.5 * amp * np.sin(4 * np.pi * x / grid.L)
    if grid.dim == 2:
        out = out + 0.3 * amp * np.cos(2 * np.pi * grid.coords[1] / grid.L)
    return out
