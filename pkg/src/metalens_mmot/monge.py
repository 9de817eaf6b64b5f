"""Monge maps read off the c-superdifferential of a c-conjugate potential vector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_row_blocks
from .cost import CostSpec, grad_x1
from .ctransform import PotentialError, PotentialVector, default_tolerance, potential_sum
from .domains import DiscreteMeasure


@dataclass(frozen=True)
class MapField:
    """Per source node: the selected target index in each non-source marginal.

    ``targets[i, k]`` indexes the grid of marginal ``k + 1`` (zero-based),
    ``multiplicity[i]`` is the size of the superdifferential at node ``i``.
    """

    targets: np.ndarray
    multiplicity: np.ndarray
    grids: tuple

    @property
    def sv_fraction(self) -> float:
        return float(np.mean(self.multiplicity == 1))

    @property
    def ties(self) -> np.ndarray:
        return self.multiplicity > 1

    def target_coords(self, k: int) -> np.ndarray:
        """Coordinates of the images in the ``k``-th non-source marginal."""
        return self.grids[k + 1].nodes[self.targets[:, k]]

    def is_bijection(self) -> bool:
        n = self.targets.shape[0]
        return all(g.size == n and np.unique(self.targets[:, k]).size == n
                   for k, g in enumerate(self.grids[1:]))


def _slack(F: PotentialVector, cost: CostSpec) -> np.ndarray:
    return cost.tensor(F.grids) - potential_sum(F)


def _tol(F, cost, tol_tie):
    return default_tolerance(cost.tensor(F.grids)) if tol_tie is None else tol_tie


def c_superdifferential(F: PotentialVector, x1_index: int, cost: CostSpec,
                        tol_tie: Optional[float] = None) -> list:
    """Index tuples ``(i_2, ..., i_N)`` where ``c - sum f_j <= tol_tie`` at source node ``x1_index``.

    Sorted lexicographically. Empty sets only occur when ``F`` is not
    c-conjugate and raise.
    """
    tol = _tol(F, cost, tol_tie)
    row = _slack(F, cost)[x1_index]
    hits = np.argwhere(row <= tol)
    if hits.size == 0:
        raise PotentialError(f"conjugacy violated: empty superdifferential at node {x1_index}")
    return [tuple(int(v) for v in h) for h in hits]


def extract_maps(F: PotentialVector, cost: CostSpec, tol_tie: Optional[float] = None,
                 threads: Optional[int] = None) -> MapField:
    """Select the lexicographically smallest tuple of each superdifferential and count its size."""
    tol = _tol(F, cost, tol_tie)
    C = cost.tensor(F.grids)
    others = potential_sum(F, skip=0)
    inner = C.shape[1:]

    def block(start, stop):
        rows = (C[start:stop] - F[0][start:stop].reshape((-1,) + (1,) * len(inner))
                - others).reshape(stop - start, -1)
        tight = rows <= tol
        return tight.argmax(axis=1), tight.sum(axis=1)

    parts = map_row_blocks(block, C.shape[0], threads)
    first = np.concatenate([p[0] for p in parts])
    mult = np.concatenate([p[1] for p in parts])
    if np.any(mult == 0):
        bad = int(np.flatnonzero(mult == 0)[0])
        raise PotentialError(f"conjugacy violated: empty superdifferential at node {bad}")
    targets = np.column_stack(np.unravel_index(first, inner))
    return MapField(targets, mult, tuple(F.grids))


def pushforward_check(maps: MapField, measures: Sequence[DiscreteMeasure]) -> tuple:
    """Total-variation distance between the push-forward of the source weights and each target measure."""
    mu1 = measures[0].weights
    out = []
    for k, m in enumerate(measures[1:]):
        pushed = np.bincount(maps.targets[:, k], weights=mu1, minlength=m.grid.size)
        out.append(0.5 * math.fsum(np.abs(pushed - m.weights).tolist()))
    return tuple(out)


def transport_cost(maps: MapField, cost: CostSpec, mu1) -> float:
    """``sum_i mu1(i) c(x_i, T_2 x_i, ..., T_N x_i)``; ``mu1`` is a measure or a weight array."""
    w = np.asarray(getattr(mu1, "weights", mu1), dtype=float)
    C = cost.tensor(maps.grids)
    idx = (np.arange(maps.targets.shape[0]),) + tuple(maps.targets.T)
    return math.fsum((w * C[idx]).tolist())


def interior_mask(grid) -> np.ndarray:
    ny, nx = grid.shape
    mask = np.zeros((ny, nx), dtype=bool)
    mask[1:-1, 1:-1] = True
    return mask.ravel()


def central_gradient(values: np.ndarray, grid) -> np.ndarray:
    """``(d/dx, d/dy)`` at every node; central inside, one-sided on the boundary."""
    ny, nx = grid.shape
    if nx < 3 or ny < 3:
        raise ValueError("stencil undefined: need >= 3 nodes per axis")
    h = grid.spacing
    dy, dx = np.gradient(np.asarray(values, dtype=float).reshape(ny, nx), h[1], h[0], edge_order=1)
    return np.column_stack([dx.ravel(), dy.ravel()])


def representation_residual(F: PotentialVector, maps: MapField, cost: CostSpec, surface=None) -> float:
    """Largest ``|D f_1 - grad_x1 c(x_1, T_2 x_1, ..., T_N x_1)|`` over interior, tie-free source nodes.

    ``D f_1`` is the central difference of the first potential. Returns NaN
    when no node qualifies.
    """
    grid = F.grids[0]
    df1 = central_gradient(F[0], grid)
    keep = interior_mask(grid) & (maps.multiplicity == 1)
    if not np.any(keep):
        return float("nan")
    x1 = grid.nodes[keep]
    targets = [maps.target_coords(k)[keep] for k in range(maps.targets.shape[1])]
    g = grad_x1(cost, x1, *targets)
    return float(np.max(np.linalg.norm(df1[keep] - g, axis=1)))
