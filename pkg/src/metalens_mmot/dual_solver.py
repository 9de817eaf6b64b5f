"""Dual ascent by iterated c-conjugation, plus exact small-instance oracles.

``maximize_dual`` repeats full conjugation sweeps with normalization until
the potential vector is c-conjugate. This is coordinate ascent: it stops at
c-conjugate points that need not maximize the dual when ``N >= 3`` or when
the start is poor, so on small instances its value is compared against the
linear-programming optimum (``lp_primal``) and, for uniform marginals,
against the exhaustive Monge search (``monge_bruteforce``).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .cost import CostSpec, product_size
from .ctransform import (
    PotentialError,
    PotentialVector,
    _check_equal_masses,
    conjugacy_defect,
    conjugate_sweep,
    default_tolerance,
    is_admissible,
    normalize_potentials,
)
from .domains import DiscreteMeasure


class OracleCapError(ValueError):
    """The instance is too large for an exact oracle."""


class SolverError(RuntimeError):
    pass


def kantorovich_I(F: PotentialVector, measures: Sequence[DiscreteMeasure]) -> float:
    """``sum_j sum_k f_j(k) mu_j(k)``, correctly rounded so the value is order independent."""
    if len(measures) != len(F):
        raise PotentialError("one measure per potential")
    terms = []
    for f, m in zip(F.potentials, measures):
        if f.shape != m.weights.shape:
            raise PotentialError("potential and measure sizes differ")
        terms.extend((f * m.weights).tolist())
    return math.fsum(terms)


@dataclass(frozen=True)
class SweepRecord:
    sweep: int
    value: float
    defect: float
    wall_time: float


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def sweeps(self) -> int:
        return len(self.records)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    @property
    def final_defect(self) -> float:
        return self.records[-1].defect if self.records else float("nan")

    def is_monotone(self, rel_tol: float = 1e-12) -> bool:
        v = self.values
        if v.size < 2:
            return True
        slack = rel_tol * (1.0 + np.abs(v[:-1]))
        return bool(np.all(np.diff(v) >= -slack))


def initial_potentials(cost: CostSpec, grids) -> PotentialVector:
    """Zero potentials, with the last one lowered to ``min c`` when the cost takes negative values."""
    F = PotentialVector.zeros(grids)
    cmin = float(np.min(cost.tensor(grids)))
    if cmin < 0:
        F = F.replace(len(F) - 1, np.full(grids[-1].size, cmin))
    return F


def maximize_dual(cost: CostSpec, measures: Sequence[DiscreteMeasure], max_sweeps: int = 500,
                  tol_defect: float = 1e-8, init: Optional[PotentialVector] = None,
                  threads: Optional[int] = None):
    """Maximize the Kantorovich functional by repeated conjugation sweeps.

    Each sweep replaces ``f_1, ..., f_N`` in order by their c-transforms and
    then normalizes (``min f_j = 0`` for ``j < N``). Iteration stops once
    the conjugacy defect is at most ``tol_defect``.

    Returns
    -------
    F : PotentialVector
        Last iterate; admissible, normalized.
    trace : SolveTrace
        Per-sweep value of the functional and conjugacy defect;
        ``trace.converged`` is False if ``max_sweeps`` ran out first.
    """
    if max_sweeps < 1:
        raise SolverError("max_sweeps must be >= 1")
    _check_equal_masses(measures, 1e-9)
    grids = tuple(m.grid for m in measures)
    F = initial_potentials(cost, grids) if init is None else init
    if tuple(F.grids) != grids:
        raise SolverError("initial potentials live on different grids")
    trace = SolveTrace()
    for sweep in range(1, max_sweeps + 1):
        t0 = time.perf_counter()
        F = normalize_potentials(conjugate_sweep(F, cost, threads=threads), measures)
        defect = conjugacy_defect(F, cost)
        trace.records.append(SweepRecord(sweep, kantorovich_I(F, measures), defect,
                                         time.perf_counter() - t0))
        if defect <= tol_defect:
            trace.converged = True
            break
    return F, trace


# --------------------------------------------------------------------------
# linear programming oracle


class _Revised:
    """Revised simplex state: basis indices, explicit basis inverse and basic values.

    Columns ``n .. n + m - 1`` are the phase-one artificials (identity).
    """

    def __init__(self, A, b, tol, refactor_every=64):
        self.A = A
        self.AT = A.T.tocsr()
        self.b = b
        self.m, self.n = A.shape
        self.tol = tol
        self.basis = np.arange(self.n, self.n + self.m)
        self.Binv = np.eye(self.m)
        self.xB = b.copy()
        self.pivots = 0
        self.refactor_every = refactor_every

    def column(self, j):
        e = np.zeros(self.m)
        if j >= self.n:
            e[j - self.n] = 1.0
        else:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            e[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        return e

    def refactor(self):
        B = np.column_stack([self.column(j) for j in self.basis])
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b

    def pivot(self, r, j, d):
        """Bring column ``j`` (with ``d = Binv a_j``) into the basis at row ``r``."""
        theta = self.xB[r] / d[r]
        self.xB -= theta * d
        self.xB[r] = theta
        pr = self.Binv[r] / d[r]
        self.Binv -= np.outer(d, pr)
        self.Binv[r] = pr
        self.basis[r] = j
        self.pivots += 1
        if self.pivots % self.refactor_every == 0:
            self.refactor()

    def reduced_costs(self, c_all, allowed):
        y = c_all[self.basis] @ self.Binv
        red = np.full(self.n + self.m, np.inf)
        red[:self.n] = c_all[:self.n] - self.AT @ y
        red[self.n:] = c_all[self.n:] - y
        red[~allowed] = np.inf
        return red

    def run(self, c_all, allowed, max_pivots, stall_limit=50):
        """Dantzig pricing; after ``stall_limit`` consecutive degenerate pivots fall back to
        Bland's rule (lowest-index entering and leaving variables) until progress resumes."""
        tol = self.tol
        stalled = 0
        while True:
            red = self.reduced_costs(c_all, allowed)
            if stalled >= stall_limit:
                improving = np.flatnonzero(red < -tol)
                if improving.size == 0:
                    return
                j = int(improving[0])
            else:
                j = int(np.argmin(red))
                if red[j] >= -tol:
                    return
            d = self.Binv @ self.column(j)
            rows = np.flatnonzero(d > tol)
            if rows.size == 0:
                raise SolverError("linear program is unbounded")
            ratios = np.maximum(self.xB[rows], 0.0) / d[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol]
            r = int(ties[np.argmin(self.basis[ties])])
            stalled = stalled + 1 if best <= tol else 0
            self.pivot(r, j, d)
            if self.pivots > max_pivots:
                raise SolverError("simplex pivot limit reached")


def simplex(A, b: np.ndarray, c: np.ndarray, tol: float = 1e-11, max_pivots: int = 10**6):
    """Solve ``min c.x  s.t.  A x = b, x >= 0`` with a two-phase revised simplex.

    ``A`` may be dense or a scipy sparse matrix. Artificial variables left
    basic after phase one are pivoted out where possible; rows where that
    fails are redundant and stay inert. Returns ``(x, value, pivots)``.
    """
    A = sparse.csc_matrix(A, dtype=float)
    A.sort_indices()
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    if np.any(neg):
        flip = np.where(neg, -1.0, 1.0)
        A = sparse.csc_matrix(sparse.diags(flip) @ A)
        b = b * flip
    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    lp = _Revised(A, b, tol * scale)

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    lp.run(phase1, np.ones(n + m, dtype=bool), max_pivots)
    lp.refactor()
    infeas = math.fsum(lp.xB[lp.basis >= n].tolist())
    if infeas > 1e-9 * scale * max(1, m):
        raise SolverError(f"linear program is infeasible (phase-one residual {infeas:.3g})")

    for r in np.flatnonzero(lp.basis >= n):
        row = lp.AT @ lp.Binv[r]
        row[lp.basis[lp.basis < n]] = 0.0
        candidates = np.flatnonzero(np.abs(row) > lp.tol)
        if candidates.size:
            j = int(candidates[0])
            lp.pivot(int(r), j, lp.Binv @ lp.column(j))

    phase2 = np.concatenate([c, np.zeros(m)])
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    lp.run(phase2, allowed, max_pivots)
    lp.refactor()

    x = np.zeros(n)
    real = lp.basis < n
    x[lp.basis[real]] = np.maximum(lp.xB[real], 0.0)
    return x, math.fsum((x * c).tolist()), lp.pivots


@dataclass(frozen=True)
class Coupling:
    weights: np.ndarray
    marginal_residuals: tuple

    def marginal(self, j: int) -> np.ndarray:
        axes = tuple(k for k in range(self.weights.ndim) if k != j)
        return self.weights.sum(axis=axes)


def transport_constraints(measures: Sequence[DiscreteMeasure]):
    """Sparse equality constraints ``A gamma = b`` fixing every marginal of a flattened coupling."""
    shape = tuple(m.grid.size for m in measures)
    size = int(np.prod(shape))
    idx = np.indices(shape).reshape(len(shape), -1)
    offsets = np.concatenate([[0], np.cumsum(shape)[:-1]])
    rows = np.concatenate([idx[j] + offsets[j] for j in range(len(shape))])
    cols = np.tile(np.arange(size), len(shape))
    A = sparse.csc_matrix((np.ones(rows.size), (rows, cols)), shape=(int(sum(shape)), size))
    return A, np.concatenate([m.weights for m in measures])


def lp_primal(cost: CostSpec, measures: Sequence[DiscreteMeasure], cap: int = 10_000):
    """Exact multi-marginal Kantorovich optimum ``min sum gamma c`` over couplings of the measures.

    Returns ``(Coupling, value)``. Raises :class:`OracleCapError` if the
    product of grid sizes exceeds ``cap``.
    """
    grids = tuple(m.grid for m in measures)
    size = product_size(grids)
    if size > cap:
        raise OracleCapError(f"oracle instance too large ({size} tuples > cap {cap})")
    _check_equal_masses(measures, 1e-9)
    C = cost.tensor(grids)
    A, b = transport_constraints(measures)
    x, value, _ = simplex(A, b, C.ravel())
    gamma = x.reshape(C.shape)
    coupling = Coupling(gamma, ())
    residuals = tuple(float(np.max(np.abs(coupling.marginal(j) - m.weights))) for j, m in enumerate(measures))
    return Coupling(gamma, residuals), value


# --------------------------------------------------------------------------
# Monge brute force


@dataclass(frozen=True)
class MongeResult:
    maps: tuple
    value: float
    unique: bool
    n_optimal: int


BRUTE_FORCE_MAX_ATOMS = 8


def monge_bruteforce(cost: CostSpec, measures: Sequence[DiscreteMeasure], tol: Optional[float] = None) -> MongeResult:
    """Minimize ``sum_i mu_1(i) c(i, s_2(i), ..., s_N(i))`` over all tuples of permutations.

    Needs uniform marginals with the same atom count ``n <= 8``. ``maps[k]``
    is the index array of the map into marginal ``k + 2`` (1-based), i.e.
    the ``k``-th non-source marginal. ``unique`` is False when another tuple
    is within ``tol`` of the optimum.
    """
    sizes = {m.grid.size for m in measures}
    if len(sizes) != 1:
        raise SolverError("brute force needs equal atom counts")
    n = sizes.pop()
    if n > BRUTE_FORCE_MAX_ATOMS:
        raise OracleCapError(f"brute-force cap: {n} atoms > {BRUTE_FORCE_MAX_ATOMS}")
    for m in measures:
        if np.ptp(m.weights) > 1e-12 * np.max(m.weights):
            raise SolverError("brute force needs uniform marginals")
    _check_equal_masses(measures, 1e-9)
    grids = tuple(m.grid for m in measures)
    C = cost.tensor(grids)
    tol = default_tolerance(C) if tol is None else tol
    w = measures[0].weights[0]
    N = len(measures)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    rows = np.arange(n)

    best = math.inf
    near = []  # (value, outer tuple index, last perm index) within tol of best
    outer_iter = itertools.product(range(len(perms)), repeat=N - 2)
    for outer in outer_iter:
        lead = (rows,) + tuple(perms[o] for o in outer)
        A = C[lead]  # (n, n): source atom i, last marginal atom k
        vals = A[rows, perms].sum(axis=1) * w
        lo = float(vals.min())
        if lo > best + tol:
            continue
        if lo < best:
            best = lo
            near = [t for t in near if t[0] <= best + tol]
        for p in np.flatnonzero(vals <= best + tol):
            near.append((float(vals[p]), outer, int(p)))
    near.sort(key=lambda t: (t[0], t[1], t[2]))
    value, outer, last = near[0]
    maps = tuple(perms[o].copy() for o in outer) + (perms[last].copy(),)
    return MongeResult(maps, value, len(near) == 1, len(near))


def duality_gap(dual_value: float, oracle_value: float) -> float:
    """``oracle - dual``; weak duality makes it nonnegative up to rounding."""
    return float(oracle_value) - float(dual_value)


def check_weak_duality(F: PotentialVector, measures, cost: CostSpec, cap: int = 10_000, tol: float = 1e-9) -> float:
    """Gap between the LP optimum and ``I(F)`` for an admissible ``F``; raises if it is below ``-tol``."""
    if not is_admissible(F, cost):
        raise PotentialError("weak duality needs an admissible potential")
    _, value = lp_primal(cost, measures, cap)
    gap = duality_gap(kantorovich_I(F, measures), value)
    if gap < -tol:
        raise SolverError(f"weak duality violated: gap {gap:.3g}")
    return gap
