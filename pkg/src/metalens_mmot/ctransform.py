"""c-transforms of potential vectors on product grids.

All marginal indices are zero-based: ``j = 0`` is the source marginal.
Every routine works on the dense cost tensor ``cost.tensor(grids)``; the
infimum over the other coordinates is an exact minimum over that tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_row_blocks
from .cost import CostSpec
from .domains import DiscreteMeasure, Grid


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialVector:
    """Potentials ``(f_1, ..., f_N)``, one array per marginal grid."""

    potentials: tuple
    grids: tuple

    def __post_init__(self):
        pots = tuple(np.array(p, dtype=float).ravel() for p in self.potentials)
        grids = tuple(self.grids)
        if len(pots) != len(grids):
            raise PotentialError("one potential per grid")
        for p, g in zip(pots, grids):
            if p.shape != (g.size,):
                raise PotentialError(f"potential of length {p.size} on a {g.size}-node grid")
            if not np.all(np.isfinite(p)):
                raise PotentialError("potentials must be finite")
            p.setflags(write=False)
        object.__setattr__(self, "potentials", pots)
        object.__setattr__(self, "grids", grids)

    @classmethod
    def zeros(cls, grids: Sequence[Grid]) -> "PotentialVector":
        return cls(tuple(np.zeros(g.size) for g in grids), tuple(grids))

    def __len__(self):
        return len(self.potentials)

    def __getitem__(self, j):
        return self.potentials[j]

    def replace(self, j: int, values) -> "PotentialVector":
        pots = list(self.potentials)
        pots[j] = values
        return PotentialVector(tuple(pots), self.grids)

    def max_abs_diff(self, other: "PotentialVector") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.potentials, other.potentials))


def _along(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = values.size
    return values.reshape(shape)


def potential_sum(F: PotentialVector, skip: Optional[int] = None) -> np.ndarray:
    """``sum_k f_k(x_k)`` broadcast over the product grid, accumulated in index order."""
    n = len(F)
    total = np.zeros((1,) * n)
    for k, f in enumerate(F.potentials):
        if k != skip:
            total = total + _along(f, k, n)
    return total


def default_tolerance(C: np.ndarray) -> float:
    return 1e-9 * (1.0 + float(np.max(np.abs(C))))


def c_transform_j(F: PotentialVector, j: int, cost: CostSpec, return_argmin: bool = False,
                  threads: Optional[int] = None):
    """j-th c-transform ``f_j^c(x_j) = min over z_k (k != j) of c(..., x_j, ...) - sum_{k != j} f_k(z_k)``.

    Parameters
    ----------
    F : PotentialVector
        Current potentials; ``F[j]`` itself is not used.
    j : int
        Zero-based marginal index.
    cost : CostSpec
    return_argmin : bool
        Also return, per node of grid ``j``, the minimizing indices of the
        other marginals as an ``(n_j, N - 1)`` integer array. Ties resolve
        to the lexicographically smallest multi-index.
    threads : int, optional
        Split the output nodes across this many threads. The result does
        not depend on it.
    """
    n = len(F)
    if not 0 <= j < n:
        raise PotentialError(f"marginal index {j} out of range for N={n}")
    C = cost.tensor(F.grids)
    others = potential_sum(F, skip=j)
    other_shape = tuple(g.size for k, g in enumerate(F.grids) if k != j)

    def block(start, stop):
        index = [slice(None)] * n
        index[j] = slice(start, stop)
        index = tuple(index)
        reduced = C[index] - np.broadcast_to(others, C.shape)[index]
        rows = np.moveaxis(reduced, j, 0).reshape(stop - start, -1)
        arg = np.argmin(rows, axis=1)
        return rows[np.arange(stop - start), arg], arg

    parts = map_row_blocks(block, F.grids[j].size, threads)
    values = np.concatenate([p[0] for p in parts])
    if not return_argmin:
        return values
    flat = np.concatenate([p[1] for p in parts])
    argmin = np.column_stack(np.unravel_index(flat, other_shape)) if other_shape else flat[:, None]
    return values, argmin


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    worst: float
    argmax: tuple
    tol: float

    def __bool__(self):
        return self.admissible


def is_admissible(F: PotentialVector, cost: CostSpec, tol: Optional[float] = None) -> AdmissibilityReport:
    """Check ``sum_j f_j(x_j) <= c(x)`` on every tuple; reports the largest excess and where."""
    C = cost.tensor(F.grids)
    tol = default_tolerance(C) if tol is None else tol
    excess = potential_sum(F) - C
    flat = int(np.argmax(excess))
    worst = float(excess.ravel()[flat])
    where = tuple(int(i) for i in np.unravel_index(flat, C.shape))
    return AdmissibilityReport(bool(worst <= tol), worst, where, float(tol))


def conjugacy_defect(F: PotentialVector, cost: CostSpec, tol: Optional[float] = None) -> float:
    """``max_j || f_j^c - f_j ||_inf`` with each transform taken against the current ``F``.

    Only meaningful on the admissible class, where ``f_j <= f_j^c``.
    """
    report = is_admissible(F, cost, tol)
    if not report:
        raise PotentialError(f"defect undefined off the admissible class (excess {report.worst:.3g})")
    return max(float(np.max(np.abs(c_transform_j(F, j, cost) - F[j]))) for j in range(len(F)))


def _check_equal_masses(measures: Sequence[DiscreteMeasure], rel_tol: float) -> None:
    masses = [m.total_mass for m in measures]
    ref = masses[0]
    if any(abs(m - ref) > rel_tol * ref for m in masses):
        raise PotentialError(f"marginal masses differ: {masses}")


def normalize_potentials(F: PotentialVector, measures: Sequence[DiscreteMeasure],
                         rel_tol: float = 1e-9) -> PotentialVector:
    """Shift ``f_j`` (j < N-1) to minimum zero and move the total shift onto ``f_N``.

    The functional ``I`` is unchanged because all masses are equal.
    """
    if len(measures) != len(F):
        raise PotentialError("one measure per potential")
    _check_equal_masses(measures, rel_tol)
    alphas = [float(np.min(f)) for f in F.potentials[:-1]]
    pots = [f - a for f, a in zip(F.potentials[:-1], alphas)]
    pots.append(F.potentials[-1] + sum(alphas))
    return PotentialVector(tuple(pots), F.grids)


def conjugate_sweep(F: PotentialVector, cost: CostSpec, check: bool = True,
                    threads: Optional[int] = None) -> PotentialVector:
    """Replace ``f_1`` by its transform, then ``f_2`` within the updated vector, and so on through ``f_N``."""
    if check:
        report = is_admissible(F, cost)
        if not report:
            raise PotentialError(f"sweep needs an admissible input (excess {report.worst:.3g} at {report.argmax})")
    for j in range(len(F)):
        F = F.replace(j, c_transform_j(F, j, cost, threads=threads))
    return F
