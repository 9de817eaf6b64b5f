"""N-ary transport costs, with the refracting-reflecting metalens cost and its derivative machinery.

The metalens cost couples a source point ``x1`` on the emitting plane
``z = 0`` with a point ``x2`` on the top plane ``z = beta`` (refraction,
medium index ``n2``) and a point ``x3`` back on ``z = 0`` (reflection,
medium index ``n1``), both routed through the surface ``z = f(x1)``::

    c(x1, x2, x3) = n2 * sqrt(|x1 - x2|^2 + (beta - f(x1))^2)
                  + n1 * sqrt(|x1 - x3|^2 + f(x1)^2)

All geometric formulas are written for the unscaled pair cost
``sqrt(H(x)^2 + |x - y|^2)`` with height ``H = beta - f`` (``c1``) or
``H = -f`` (``c2``) and then multiplied by the corresponding index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .domains import Grid


class CostError(ValueError):
    pass


# --------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class SurfaceProfile:
    """Graph ``z = f(x)`` separating the index-``n1`` layer (below) from the index-``n2`` layer.

    ``f`` and ``grad_f`` act on arrays of points with trailing axis 2.
    """

    f: Callable[[np.ndarray], np.ndarray]
    grad_f: Callable[[np.ndarray], np.ndarray]
    beta: float
    n1: float
    n2: float
    description: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise CostError("beta must be positive")
        if self.n1 < 1 or self.n2 < 1:
            raise CostError("refractive indices must be >= 1")

    def check_between_planes(self, points: np.ndarray) -> None:
        h = np.asarray(self.f(np.asarray(points, dtype=float)))
        if np.any(h >= self.beta):
            raise CostError("surface touches top plane")
        if np.any(h <= 0):
            raise CostError("surface touches bottom plane")


def constant_surface(value: float, beta: float, n1: float, n2: float) -> SurfaceProfile:
    value = float(value)

    def f(x):
        return np.full(np.shape(x)[:-1], value)

    def grad_f(x):
        return np.zeros(np.shape(x))

    return SurfaceProfile(f, grad_f, float(beta), float(n1), float(n2),
                          {"type": "constant", "value": value})


def affine_surface(a: Sequence[float], b: float, beta: float, n1: float, n2: float) -> SurfaceProfile:
    """``f(x) = a . x + b``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (2,):
        raise CostError("affine surface needs a 2-vector slope")
    b = float(b)

    def f(x):
        return np.asarray(x, dtype=float) @ a + b

    def grad_f(x):
        return np.broadcast_to(a, np.shape(x)).copy()

    return SurfaceProfile(f, grad_f, float(beta), float(n1), float(n2),
                          {"type": "affine", "a": a.tolist(), "b": b})


def tabulated_surface(grid: Grid, values: Sequence[float], beta: float, n1: float,
                      n2: float) -> SurfaceProfile:
    """Surface sampled at the nodes of ``grid``.

    The gradient uses central differences in the interior and one-sided
    differences on the boundary; off-node queries interpolate both bilinearly.
    """
    from scipy.interpolate import RegularGridInterpolator

    img = np.asarray(values, dtype=float).reshape(grid.shape)
    h = grid.spacing
    gy, gx = np.gradient(img, h[1], h[0], edge_order=1) if min(grid.shape) > 1 else (
        np.zeros_like(img), np.zeros_like(img))
    ys = np.unique(grid.nodes[:, 1])
    xs = np.unique(grid.nodes[:, 0])
    node_f = img.ravel().copy()
    node_grad = np.column_stack([gx.ravel(), gy.ravel()])

    if len(xs) > 1 and len(ys) > 1:
        interp_f = RegularGridInterpolator((ys, xs), img, bounds_error=False, fill_value=None)
        interp_gx = RegularGridInterpolator((ys, xs), gx, bounds_error=False, fill_value=None)
        interp_gy = RegularGridInterpolator((ys, xs), gy, bounds_error=False, fill_value=None)
    else:
        interp_f = interp_gx = interp_gy = None

    def _lookup(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        # exact node hits return the tabulated values without interpolation round-off
        hit = np.all(np.isclose(flat[:, None, :], grid.nodes[None, :, :], rtol=0, atol=1e-14), axis=2)
        return x, flat, hit

    def f(x):
        x, flat, hit = _lookup(x)
        out = np.empty(len(flat))
        found = hit.any(axis=1)
        out[found] = node_f[hit[found].argmax(axis=1)]
        if np.any(~found):
            if interp_f is None:
                raise CostError("tabulated surface needs >= 2 nodes per axis off-grid")
            out[~found] = interp_f(flat[~found][:, ::-1])
        return out.reshape(x.shape[:-1])

    def grad_f(x):
        x, flat, hit = _lookup(x)
        out = np.empty((len(flat), 2))
        found = hit.any(axis=1)
        out[found] = node_grad[hit[found].argmax(axis=1)]
        if np.any(~found):
            if interp_f is None:
                raise CostError("tabulated surface needs >= 2 nodes per axis off-grid")
            q = flat[~found][:, ::-1]
            out[~found] = np.column_stack([interp_gx(q), interp_gy(q)])
        return out.reshape(x.shape)

    return SurfaceProfile(f, grad_f, float(beta), float(n1), float(n2),
                          {"type": "grid", "resolution": list(grid.resolution)})


def surface_from_config(entry: Mapping, beta: float, n1: float, n2: float,
                      omega0: Optional[Grid] = None,
                      values: Optional[Sequence[float]] = None) -> SurfaceProfile:
    """Build a surface from ``{"type": "constant" | "affine" | "grid", ...}``.

    For ``"grid"`` the caller passes the node ``values`` already read from
    the CSV at ``entry["path"]``.
    """
    kind = entry.get("type")
    if kind == "constant":
        return constant_surface(entry["value"], beta, n1, n2)
    if kind == "affine":
        return affine_surface(entry["a"], entry["b"], beta, n1, n2)
    if kind == "grid":
        if omega0 is None or values is None:
            raise CostError("grid surfaces need the source grid and node values")
        return tabulated_surface(omega0, values, beta, n1, n2)
    raise CostError(f"unknown surface type {kind!r}")


# --------------------------------------------------------------------------
# cost specs


@dataclass(frozen=True)
class CostSpec:
    """An N-ary cost.

    ``evaluator(*xs)`` takes one coordinate array per marginal (trailing
    axis 2, mutually broadcastable) and returns the cost. Tabulated costs
    have no coordinate evaluator; they carry ``table`` instead.
    """

    arity: int
    kind: str
    evaluator: Optional[Callable[..., np.ndarray]] = None
    grad_x1_fn: Optional[Callable[..., np.ndarray]] = None
    params: Mapping = field(default_factory=dict)
    table: Optional[np.ndarray] = None
    surface: Optional[SurfaceProfile] = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.arity < 2:
            raise CostError("cost arity must be >= 2")
        if self.kind not in ("metalens", "separable-sum", "tabulated"):
            raise CostError(f"unknown cost kind {self.kind!r}")
        if self.kind == "metalens" and self.arity != 3:
            raise CostError("metalens cost is ternary")
        if self.kind == "tabulated":
            if self.table is None or np.ndim(self.table) != self.arity:
                raise CostError("tabulated cost needs an N-dimensional table")
            if not np.all(np.isfinite(self.table)):
                raise CostError("tabulated cost has non-finite entries")

    def __call__(self, *xs):
        if self.evaluator is None:
            raise CostError(f"{self.kind} cost has no coordinate evaluator")
        if len(xs) != self.arity:
            raise CostError(f"expected {self.arity} points, got {len(xs)}")
        return self.evaluator(*(np.asarray(x, dtype=float) for x in xs))

    def tensor(self, grids: Sequence[Grid]) -> np.ndarray:
        """Dense cost over the product of ``grids`` (read-only, cached)."""
        grids = tuple(grids)
        if len(grids) != self.arity:
            raise CostError(f"expected {self.arity} grids, got {len(grids)}")
        if grids in self._cache:
            return self._cache[grids]
        shape = tuple(g.size for g in grids)
        if self.table is not None:
            t = np.array(self.table, dtype=float)
            if t.shape != shape:
                raise CostError(f"table shape {t.shape} does not match grids {shape}")
        else:
            xs = []
            for j, g in enumerate(grids):
                s = [1] * self.arity
                s[j] = g.size
                xs.append(g.nodes.reshape(tuple(s) + (2,)))
            t = np.broadcast_to(self(*xs), shape).astype(float, copy=True)
        if not np.all(np.isfinite(t)):
            raise CostError("cost is not finite on the product of grids")
        t.setflags(write=False)
        self._cache[grids] = t
        return t


def _pair_length(x, y, height):
    d = x - y
    return np.sqrt(np.sum(d * d, axis=-1) + height * height)


def build_metalens_cost(surface: SurfaceProfile, omega0: Optional[Grid] = None) -> CostSpec:
    """Metalens cost ``c1(x1, x2) + c2(x1, x3)``; ``f`` is checked on the nodes of ``omega0``."""
    if omega0 is not None:
        surface.check_between_planes(omega0.nodes)
    elif surface.description.get("type") == "constant":
        surface.check_between_planes(np.zeros((1, 2)))
    beta, n1, n2 = surface.beta, surface.n1, surface.n2

    def evaluate(x1, x2, x3):
        fx = surface.f(x1)
        return n2 * _pair_length(x1, x2, beta - fx) + n1 * _pair_length(x1, x3, fx)

    def grad(x1, x2, x3):
        x1 = np.asarray(x1, dtype=float)
        fx = surface.f(x1)[..., None]
        g = surface.grad_f(x1)
        top = beta - fx
        r1 = np.sqrt(np.sum((x1 - x2) ** 2, axis=-1, keepdims=True) + top * top)
        r2 = np.sqrt(np.sum((x1 - x3) ** 2, axis=-1, keepdims=True) + fx * fx)
        return n2 * (x1 - x2 - top * g) / r1 + n1 * (x1 - x3 + fx * g) / r2

    return CostSpec(3, "metalens", evaluate, grad,
                    {"beta": beta, "n1": n1, "n2": n2, "surface": dict(surface.description)},
                    surface=surface)


def separable_sum_cost(arity: int, terms: Sequence[tuple], grad_x1=None) -> CostSpec:
    """``c = sum(pair(x_i, x_j) for (i, j, pair) in terms)`` with 0-based marginal indices."""
    terms = tuple(terms)
    for i, j, _ in terms:
        if not (0 <= i < arity and 0 <= j < arity) or i == j:
            raise CostError(f"bad term indices ({i}, {j})")

    def evaluate(*xs):
        total = 0.0
        for i, j, pair in terms:
            total = total + pair(xs[i], xs[j])
        return total

    return CostSpec(arity, "separable-sum", evaluate, grad_x1, {"terms": len(terms)})


def distance_sum_cost(arity: int, power: float = 1.0, weights: Optional[Sequence[float]] = None) -> CostSpec:
    """``c = sum_k w_k |x_1 - x_k|^power`` over ``k = 2..N``."""
    w = np.ones(arity - 1) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (arity - 1,):
        raise CostError("need one weight per non-source marginal")
    p = float(power)

    def make(wk):
        def pair(a, b):
            return wk * np.sqrt(np.sum((a - b) ** 2, axis=-1)) ** p
        return pair

    terms = [(0, k + 1, make(w[k])) for k in range(arity - 1)]

    def grad(x1, *others):
        g = 0.0
        for wk, xk in zip(w, others):
            d = np.asarray(x1, dtype=float) - xk
            r = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(r > 0, p * r ** (p - 2), 0.0)
            g = g + wk * scale * d
        return g

    base = separable_sum_cost(arity, terms, grad)
    return CostSpec(arity, "separable-sum", base.evaluator, grad,
                    {"type": "distance_sum", "power": p, "weights": w.tolist()})


def tabulated_cost(table: np.ndarray) -> CostSpec:
    t = np.array(table, dtype=float)
    t.setflags(write=False)
    return CostSpec(t.ndim, "tabulated", table=t, params={"shape": list(t.shape)})


# --------------------------------------------------------------------------
# derivatives


def grad_x1(cost: CostSpec, x1, *others) -> np.ndarray:
    """Gradient of the cost in the source variable ``x1``."""
    if cost.grad_x1_fn is None:
        raise CostError(f"{cost.kind} cost has no analytic x1-gradient")
    return cost.grad_x1_fn(np.asarray(x1, dtype=float), *(np.asarray(o, dtype=float) for o in others))


def _pair_geometry(cost: CostSpec, which: str, x, y):
    if cost.kind != "metalens":
        raise CostError("mixed Hessians are defined for the metalens cost only")
    s = cost.surface
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = s.f(x)
    if which == "c1":
        height, index = s.beta - fx, s.n2
    elif which == "c2":
        height, index = -fx, s.n1
    else:
        raise CostError(f"which must be 'c1' or 'c2', got {which!r}")
    g = s.grad_f(x)
    d = x - y
    c = np.sqrt(np.sum(d * d, axis=-1) + height * height)
    return d, np.asarray(height), g, c, index


def mixed_hessian(cost: CostSpec, which: str, x, y) -> np.ndarray:
    """Matrix ``M[i, j] = d^2 c / dx_i dy_j`` for ``c1`` (x2 = y) or ``c2`` (x3 = y).

    Unscaled: ``-(c^2 Id + (x - y - H grad f) (y - x)^T) / c^3``, then times the index.
    Batched over leading axes.
    """
    d, height, g, c, index = _pair_geometry(cost, which, x, y)
    a = d - height[..., None] * g
    outer = a[..., :, None] * (-d)[..., None, :]
    eye = np.eye(2) * (c * c)[..., None, None]
    return -index * (eye + outer) / (c**3)[..., None, None]


def hessian_det(cost: CostSpec, which: str, x, y) -> np.ndarray:
    """Closed-form determinant of :func:`mixed_hessian`.

    ``index^2 * H (H + (x - y) . grad f) / c^4`` for the unscaled pair length ``c``.
    """
    d, height, g, c, index = _pair_geometry(cost, which, x, y)
    proj = np.sum(d * g, axis=-1)
    return index**2 * height * (height + proj) / c**4


# --------------------------------------------------------------------------
# injectivity / twist


def _max_box_distance(a: Grid, b: Grid) -> float:
    ca, cb = a.corners(), b.corners()
    return float(np.max(np.linalg.norm(ca[:, None, :] - cb[None, :, :], axis=-1)))


@dataclass(frozen=True)
class InjectivityBound:
    N0: float
    N1: float
    m0: float
    m1: float
    sub_bounds: tuple[float, float, float, float]
    C0: float
    gradf_max: float
    passed: bool


def injectivity_bound(surface: SurfaceProfile, grids: Sequence[Grid]) -> InjectivityBound:
    """Sufficient bound ``C0`` on ``max |grad f|`` for the twist of the metalens cost.

    ``N0``/``N1`` are the largest distances between the boxes of
    ``(omega0, omega1)`` and ``(omega0, omega2)``; ``m0 = min(beta - f)``,
    ``m1 = min f`` and ``max |grad f|`` are sampled on the ``omega0`` nodes.
    """
    omega0, omega1, omega2 = grids
    beta, n1, n2 = surface.beta, surface.n1, surface.n2
    fx = np.asarray(surface.f(omega0.nodes))
    m0 = float(np.min(beta - fx))
    m1 = float(np.min(fx))
    if m0 <= 0 or m1 <= 0:
        raise CostError(f"surface must lie strictly between the planes (m0={m0}, m1={m1})")
    N0 = _max_box_distance(omega0, omega1)
    N1 = _max_box_distance(omega0, omega2)
    subs = (n2**2 * m0**2 / (beta * N0), m0 / N0, n1**2 * m1**2 / (beta * N1), m1 / N1)
    C0 = min(subs)
    gmax = float(np.max(np.linalg.norm(surface.grad_f(omega0.nodes), axis=-1)))
    return InjectivityBound(N0, N1, m0, m1, subs, C0, gmax, gmax < C0)


@dataclass
class TwistReport:
    n_samples: int
    s_points: int
    min_eig_c1: float
    min_eig_c2: float
    nonpositive_eig: int
    injectivity_violations: int
    min_grad_separation: float
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.nonpositive_eig == 0 and self.injectivity_violations == 0


def _uniform_in_box(rng, grid: Grid, n: int) -> np.ndarray:
    lo = np.asarray(grid.min_corner)
    hi = np.asarray(grid.max_corner)
    return lo + rng.random((n, 2)) * (hi - lo)


def verify_twist(cost: CostSpec, surface: SurfaceProfile, grids: Sequence[Grid], n_samples: int,
                 seed: int = 0, s_points: int = 11, tol: float = 1e-9) -> TwistReport:
    """Sample the positivity and injectivity conditions behind the twist of the metalens cost.

    Source points are drawn from the ``omega0`` nodes, ``X = (x2, x3)`` and
    ``Y = (y2, y3)`` uniformly from the ``omega1 x omega2`` boxes. For each
    triple the symmetric parts of ``-M1(s)``, ``-M2(s)`` are checked along
    the segment from ``Y`` to ``X``; the quadratic form is what enters the
    injectivity argument, so eigenvalues of the symmetric part are used.
    """
    if cost.kind != "metalens":
        raise CostError("twist verification is implemented for the metalens cost")
    if n_samples <= 0:
        return TwistReport(0, s_points, float("inf"), float("inf"), 0, 0, float("inf"), True)
    omega0, omega1, omega2 = grids
    rng = np.random.default_rng(seed)
    x1 = omega0.nodes[rng.integers(0, omega0.size, n_samples)]
    X2, X3 = _uniform_in_box(rng, omega1, n_samples), _uniform_in_box(rng, omega2, n_samples)
    Y2, Y3 = _uniform_in_box(rng, omega1, n_samples), _uniform_in_box(rng, omega2, n_samples)

    s = np.linspace(0.0, 1.0, s_points)[:, None, None]
    p2 = s * X2 + (1 - s) * Y2
    p3 = s * X3 + (1 - s) * Y3
    xb = np.broadcast_to(x1, p2.shape)
    eig = []
    for which, p in (("c1", p2), ("c2", p3)):
        m = -mixed_hessian(cost, which, xb, p)
        sym = 0.5 * (m + np.swapaxes(m, -1, -2))
        eig.append(np.linalg.eigvalsh(sym)[..., 0])
    worst = np.minimum(eig[0].min(axis=0), eig[1].min(axis=0))

    gx = grad_x1(cost, x1, X2, X3)
    gy = grad_x1(cost, x1, Y2, Y3)
    sep = np.linalg.norm(gx - gy, axis=-1)
    dist = np.sqrt(np.sum((X2 - Y2) ** 2, axis=-1) + np.sum((X3 - Y3) ** 2, axis=-1))
    distinct = dist > tol
    violations = int(np.sum(distinct & (sep <= tol)))
    ratio = sep[distinct] / dist[distinct]
    return TwistReport(
        n_samples=n_samples,
        s_points=s_points,
        min_eig_c1=float(eig[0].min()),
        min_eig_c2=float(eig[1].min()),
        nonpositive_eig=int(np.sum(worst <= 0)),
        injectivity_violations=violations,
        min_grad_separation=float(ratio.min()) if ratio.size else float("inf"),
        vacuous=False,
    )


# --------------------------------------------------------------------------
# Lipschitz estimate

_EXHAUSTIVE_CAP = 5 * 10**7


def lipschitz_estimate(cost: CostSpec, grids: Sequence[Grid], n_samples: int = 1000,
                       seed: int = 0) -> float:
    """Empirical Lipschitz constant of the cost on the product of grids.

    ``K = max |c(x) - c(y)| / sum_j |x_j - y_j|`` over ``n_samples`` random
    pairs of node tuples. When it is affordable, every pair of tuples that
    differ in exactly one coordinate is included as well, which makes the
    estimate an upper bound for the Lipschitz constant of any c-transform
    on these grids.
    """
    grids = tuple(grids)
    C = cost.tensor(grids)
    best = 0.0
    for j, g in enumerate(grids):
        n = g.size
        if n < 2 or n * C.size > _EXHAUSTIVE_CAP:
            continue
        moved = np.moveaxis(C, j, 0).reshape(n, -1)
        dist = np.linalg.norm(g.nodes[:, None, :] - g.nodes[None, :, :], axis=-1)
        for a in range(n - 1):
            diff = np.abs(moved[a + 1:] - moved[a]).max(axis=1)
            best = max(best, float(np.max(diff / dist[a, a + 1:])))
    if n_samples > 0:
        rng = np.random.default_rng(seed)
        ia = np.stack([rng.integers(0, g.size, n_samples) for g in grids])
        ib = np.stack([rng.integers(0, g.size, n_samples) for g in grids])
        dsum = sum(np.linalg.norm(g.nodes[ia[j]] - g.nodes[ib[j]], axis=-1) for j, g in enumerate(grids))
        dc = np.abs(C[tuple(ia)] - C[tuple(ib)])
        keep = dsum > 0
        if np.any(keep):
            best = max(best, float(np.max(dc[keep] / dsum[keep])))
    return best


def finite_difference_grad_x1(cost: CostSpec, x1, *others, step: float = 1e-6) -> np.ndarray:
    """Central differences of the evaluator in ``x1``."""
    x1 = np.asarray(x1, dtype=float)
    out = np.empty(np.broadcast_shapes(x1.shape, *(np.shape(o) for o in others)))
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        out[..., i] = (cost(x1 + e, *others) - cost(x1 - e, *others)) / (2 * step)
    return out


def finite_difference_mixed(cost: CostSpec, which: str, x, y, step: float = 1e-6) -> np.ndarray:
    """Central differences of ``grad_x1`` in the target variable of ``which``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape, y.shape) + (2,))
    # the other target sits at x1 itself; its term does not depend on y
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        if which == "c1":
            gp, gm = grad_x1(cost, x, y + e, x), grad_x1(cost, x, y - e, x)
        else:
            gp, gm = grad_x1(cost, x, x, y + e), grad_x1(cost, x, x, y - e)
        out[..., :, j] = (gp - gm) / (2 * step)
    return out


def product_size(grids: Sequence[Grid]) -> int:
    return int(np.prod([g.size for g in grids], dtype=np.int64))

