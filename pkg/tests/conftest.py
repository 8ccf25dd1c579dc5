
import math

import numpy as np
import pytest
from scipy import integrate

from dascap.channel import ChannelParams
from dascap.ergodic import McConfig, cell_average_rate
from dascap.geometry import Region, circular_layout


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_hexagon():
    return Region.hexagon(1.0)


def region_average(region: Region, func, epsabs: float = 1e-10, epsrel: float = 1e-8) -> float:
    """Adaptive quadrature of func(x, y) over the centroid fan triangulation, divided by the area."""
    c = region.centroid
    total = 0.0
    verts = region.vertices
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        # Parametrise the triangle (c, a, b) by s in [0, 1], t in [0, 1 - s].
        jac = abs((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]))

        def integrand(t, s, a=a, b=b):
            x = c[0] + s * (a[0] - c[0]) + t * (b[0] - c[0])
            y = c[1] + s * (a[1] - c[1]) + t * (b[1] - c[1])
            return func(x, y)

        value, _ = integrate.dblquad(integrand, 0.0, 1.0, 0.0, lambda s: 1.0 - s, epsabs=epsabs, epsrel=epsrel)
        total += value * jac
    return total / region.area


@pytest.fixture
def region_mean():
    return region_average


def best_circular_radius(region: Region, n_ports: int, power: float, mode: str, params: ChannelParams,
                         mc: McConfig, radii, phases=(0.0, math.pi / 6.0)) -> float:
    """Radius of the best circular layout over a grid of radii and the two mirror-symmetric orientations."""
    best_rate, best_radius = -math.inf, math.nan
    for phase in phases:
        for r in radii:
            layout = circular_layout(n_ports, float(r), region, phase=phase)
            rate = cell_average_rate(layout, power, mode, "all", params, None, mc).mean
            if rate > best_rate:
                best_rate, best_radius = rate, float(r)
    return best_radius


@pytest.fixture
def circular_sweep():
    return best_circular_radius
