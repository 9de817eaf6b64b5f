"""Cell-centered grids on planar boxes and the discrete measures living on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np


class DomainError(ValueError):
    """Raised for malformed grids, densities or mass-balance inputs."""


@dataclass(frozen=True)
class Grid:
    """Rectangular cell-centered grid.

    Node ``k = iy * nx + ix`` sits at ``min_corner + (i + 1/2) * h`` per axis,
    so ``x`` varies fastest (row-major over rows of constant ``y``).
    """

    min_corner: tuple[float, float]
    max_corner: tuple[float, float]
    resolution: tuple[int, int]
    nodes: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        nx, ny = self.resolution
        h = (hi - lo) / np.array([nx, ny], dtype=float)
        xs = lo[0] + (np.arange(nx) + 0.5) * h[0]
        ys = lo[1] + (np.arange(ny) + 0.5) * h[1]
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def spacing(self) -> np.ndarray:
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        return (hi - lo) / np.asarray(self.resolution, dtype=float)

    @property
    def cell_area(self) -> float:
        h = self.spacing
        return float(h[0] * h[1])

    @property
    def size(self) -> int:
        return self.resolution[0] * self.resolution[1]

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(ny, nx)`` for viewing node data as an image."""
        return (self.resolution[1], self.resolution[0])

    def corners(self) -> np.ndarray:
        (x0, y0), (x1, y1) = self.min_corner, self.max_corner
        return np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]], dtype=float)

    def as_image(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape + np.shape(values)[1:])


def build_grid(min_corner: Sequence[float], max_corner: Sequence[float],
               resolution: Sequence[int]) -> Grid:
    """Build a cell-centered grid on the box ``[min_corner, max_corner]``."""
    if len(min_corner) != 2 or len(max_corner) != 2 or len(resolution) != 2:
        raise DomainError("grids are planar: corners and resolution need 2 entries")
    res = tuple(int(r) for r in resolution)
    if any(r != q for r, q in zip(res, resolution)) or min(res) < 1:
        raise DomainError(f"degenerate resolution {tuple(resolution)}")
    lo = tuple(float(v) for v in min_corner)
    hi = tuple(float(v) for v in max_corner)
    if not all(np.isfinite(lo + hi)) or not (hi[0] > lo[0] and hi[1] > lo[1]):
        raise DomainError(f"degenerate box {lo} -> {hi}")
    return Grid(lo, hi, res)


@dataclass(frozen=True)
class DiscreteMeasure:
    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.grid.size,):
            raise DomainError(f"expected {self.grid.size} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise DomainError("non-finite weight")
        if np.any(w < 0):
            raise DomainError("negative weight")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.total_mass <= 0:
            raise DomainError("measure has zero total mass")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, self.weights * factor)


DensityInput = Union[str, Mapping, Callable[[np.ndarray], np.ndarray], Sequence[float], np.ndarray]


def _density_from_mapping(entry: Mapping, nodes: np.ndarray) -> np.ndarray:
    kind = entry.get("type")
    if kind == "uniform":
        return np.full(len(nodes), float(entry.get("value", 1.0)))
    if kind == "gaussian":
        center = np.asarray(entry["center"], dtype=float)
        sigma = float(entry["sigma"])
        if sigma <= 0:
            raise DomainError("gaussian sigma must be positive")
        r2 = np.sum((nodes - center) ** 2, axis=1)
        return float(entry.get("amplitude", 1.0)) * np.exp(-0.5 * r2 / sigma**2) + float(entry.get("floor", 0.0))
    if kind == "array":
        return np.asarray(entry["values"], dtype=float)
    raise DomainError(f"unknown density type {kind!r}")


def evaluate_density(grid: Grid, density: DensityInput) -> np.ndarray:
    """Density values at the grid nodes (before multiplying by the cell area)."""
    if isinstance(density, str):
        if density != "uniform":
            raise DomainError(f"unknown density {density!r}")
        return np.ones(grid.size)
    if isinstance(density, Mapping):
        values = _density_from_mapping(density, grid.nodes)
    elif callable(density):
        values = np.asarray(density(grid.nodes), dtype=float)
    else:
        values = np.asarray(density, dtype=float)
    values = np.ravel(values)
    if values.shape != (grid.size,):
        raise DomainError(f"density length mismatch: {values.size} values for {grid.size} nodes")
    return values


def build_measure(grid: Grid, density: DensityInput = "uniform") -> DiscreteMeasure:
    """Discretize a density: ``weight_k = density(node_k) * cell_area``.

    ``density`` may be ``"uniform"``, a mapping such as
    ``{"type": "gaussian", "center": [x, y], "sigma": s}``, a callable on the
    ``(n, 2)`` node array, or an explicit per-node array in node order.
    """
    values = evaluate_density(grid, density)
    if np.any(values < 0):
        raise DomainError("negative density")
    return DiscreteMeasure(grid, values * grid.cell_area)


@dataclass(frozen=True)
class BalanceReport:
    masses: tuple[float, ...]
    deviations: tuple[float, ...]
    balanced: bool
    rel_tol: float
    rescaled: tuple[DiscreteMeasure, ...]


def check_mass_balance(measures: Sequence[DiscreteMeasure], rel_tol: float = 1e-9) -> BalanceReport:
    """Compare every total mass to the first one.

    ``deviations[j] = |m_j - m_0| / m_0``. ``rescaled`` holds copies whose
    weights are multiplied by ``m_0 / m_j`` so that all masses agree.
    """
    if len(measures) < 2:
        raise DomainError("need >= 2 measures")
    masses = tuple(m.total_mass for m in measures)
    if min(masses) <= 0:
        raise DomainError("zero total mass")
    ref = masses[0]
    deviations = tuple(abs(m - ref) / ref for m in masses)
    rescaled = tuple(m if i == 0 else m.scaled(ref / masses[i]) for i, m in enumerate(measures))
    return BalanceReport(masses, deviations, max(deviations) <= rel_tol, rel_tol, rescaled)
