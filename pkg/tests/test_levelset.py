import numpy as np
import pytest

from sones.errors import InvalidArgumentError
from sones.levelset import level_set_grid, read_grid_csv, write_grid_csv
from sones.maps import PolynomialMap, derivative_bundle, newton_root, partial

from conftest import THETA_STAR

BOUNDS = (-1.0, 3.0, 0.0, 4.0)


def _grid_critical_points(grid, tol):
    """Grid nodes where the discrete gradient magnitude is a local minimum below ``tol``."""
    gy, gx = np.gradient(grid.values, grid.y, grid.x)
    mag = np.hypot(gx, gy)
    found = []
    for i in range(1, mag.shape[0] - 1):
        for j in range(1, mag.shape[1] - 1):
            window = mag[i - 1 : i + 2, j - 1 : j + 2]
            if mag[i, j] == window.min() and mag[i, j] < tol:
                found.append(np.array([grid.x[j], grid.y[i]]))
    return found


def _refine(f, x0):
    g = [partial(f, (1, 0)), partial(f, (0, 1))]
    return newton_root(lambda x: np.array([gi(x) for gi in g]), lambda x: derivative_bundle(f, x).hessian, x0)


def test_grid_layout(paper_map):
    grid = level_set_grid(paper_map, 0, 0, BOUNDS, 5)
    assert grid.values.shape == (5, 5)
    assert grid.values[2, 3] == pytest.approx(paper_map([grid.x[3], grid.y[2]]))


def test_stationary_points_of_map(paper_map):
    grid = level_set_grid(paper_map, 0, 0, BOUNDS, 401)
    pts = [_refine(paper_map, p) for p in _grid_critical_points(grid, 0.1)]
    for target in ([-0.07, 2.22], [1.26, 2.62]):
        assert min(np.max(np.abs(p - target)) for p in pts) <= 0.005


def test_first_gradient_component_peaks_at_inflection_point(paper_map):
    grid = level_set_grid(paper_map, 1, 0, (0.0, 2.0, 1.0, 3.0), 201)
    i, j = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    assert abs(grid.x[j] - THETA_STAR[0]) <= 0.02 and abs(grid.y[i] - THETA_STAR[1]) <= 0.02
    assert np.all(np.linalg.eigvalsh(derivative_bundle(partial(paper_map, (1, 0)), THETA_STAR).hessian) < 0)


def test_second_gradient_component_saddle(paper_map):
    g2 = partial(paper_map, (0, 1))
    grid = level_set_grid(paper_map, 1, 1, BOUNDS, 401)
    pts = [_refine(g2, p) for p in _grid_critical_points(grid, 0.1)]
    saddle = min(pts, key=lambda p: np.max(np.abs(p - [1.8, 1.8])))
    assert np.allclose(saddle, [1.8, 1.8], atol=1e-9)
    eig = np.linalg.eigvalsh(derivative_bundle(g2, saddle).hessian)
    assert eig[0] < 0 < eig[1]


def test_csv_round_trip(paper_map, tmp_path):
    grid = level_set_grid(paper_map, 1, 1, BOUNDS, 7)
    write_grid_csv(grid, tmp_path / "g.csv")
    back = read_grid_csv(tmp_path / "g.csv")
    assert np.array_equal(back.values, grid.values)
    assert np.array_equal(back.x, grid.x) and np.array_equal(back.y, grid.y)


def test_rejects_non_planar_maps():
    with pytest.raises(InvalidArgumentError):
        level_set_grid(PolynomialMap.zero(3), 0, 0, BOUNDS, 5)
    with pytest.raises(InvalidArgumentError):
        level_set_grid(PolynomialMap.zero(2), 2, 0, BOUNDS, 5)
