import numpy as np
import pytest

from metalens_mmot.cost import build_metalens_cost, constant_surface, distance_sum_cost
from metalens_mmot.domains import build_grid, build_measure


def line_grid(points):
    """Grid whose nodes sit at the given equally spaced x positions on the line y = 0."""
    points = np.asarray(points, dtype=float)
    h = points[1] - points[0] if points.size > 1 else 1.0
    return build_grid((points[0] - h / 2, -0.5), (points[-1] + h / 2, 0.5), (points.size, 1))


def uniform_measures(grids, total=1.0):
    ms = [build_measure(g) for g in grids]
    return [m.scaled(total / m.total_mass) for m in ms]


@pytest.fixture
def shifted():
    """Atoms {0,1}, {0.5,2}, {0,1} with mass 1/2 each and c = |x1 - x2| + |x1 - x3|."""
    grids = (line_grid([0, 1]), line_grid([0.5, 2]), line_grid([0, 1]))
    return grids, uniform_measures(grids), distance_sum_cost(3, power=1)


@pytest.fixture
def identity_metalens():
    """Flat surface, identical 3x3 grids on the unit square, uniform measures."""
    surface = constant_surface(1.0, 2.0, 1.0, 1.5)
    grids = tuple(build_grid((0, 0), (1, 1), (3, 3)) for _ in range(3))
    return grids, uniform_measures(grids), build_metalens_cost(surface, grids[0]), surface
