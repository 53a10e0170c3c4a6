"""Plot-ready grids of a 2-D map or one of its gradient components."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .maps import PolynomialMap, evaluate, partial, unit_index


@dataclass(frozen=True)
class Grid:
    x: np.ndarray  # theta_1 samples
    y: np.ndarray  # theta_2 samples
    values: np.ndarray  # values[i, j] at (x[j], y[i])


def level_set_grid(h: PolynomialMap, order: int, axis: int, bounds, resolution: int) -> Grid:
    """Sample ``h`` (``order=0``) or ``G_axis = dh/dtheta_axis`` (``order=1``) on a grid.

    ``bounds`` is ``(x_min, x_max, y_min, y_max)``; ``axis`` is 0-based.
    """
    if h.dimension != 2:
        raise InvalidArgumentError(f"level-set grids need a 2-D map, got dimension {h.dimension}")
    if order not in (0, 1):
        raise InvalidArgumentError(f"order must be 0 or 1, got {order}")
    if resolution < 2:
        raise InvalidArgumentError("resolution must be at least 2")
    f = h if order == 0 else partial(h, unit_index(2, axis))
    x0, x1, y0, y1 = bounds
    x = np.linspace(x0, x1, resolution)
    y = np.linspace(y0, y1, resolution)
    X, Y = np.meshgrid(x, y)
    values = evaluate(f, np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    return Grid(x, y, values)


def write_grid_csv(grid: Grid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta_1", "theta_2", "value"])
        for i, yv in enumerate(grid.y):
            for j, xv in enumerate(grid.x):
                writer.writerow([repr(float(xv)), repr(float(yv)), repr(float(grid.values[i, j]))])


def read_grid_csv(path) -> Grid:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    return Grid(x, y, data[:, 2].reshape(y.size, x.size))
