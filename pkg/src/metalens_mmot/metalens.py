"""Phase-gradient synthesis for the refracting-reflecting metalens and ray-level verification.

Rays leave ``(x, 0)`` along ``e = (0, 0, 1)`` and hit the surface at
``(x, f(x))``. The refracted ray reaches ``(T1 x, beta)``, the reflected
one ``(T2 x, 0)``. In a :class:`~metalens_mmot.monge.MapField` for the
metalens cost, ``T1`` is the map into the second marginal and ``T2`` the
map into the third.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import SurfaceProfile
from .domains import Grid
from .monge import MapField, central_gradient, interior_mask

E_INCIDENT = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PhaseField:
    """``grad Phi`` at ``(x, f(x))`` for every source node; ``curl`` is NaN on boundary nodes."""

    grid: Grid
    grad: np.ndarray
    curl: np.ndarray

    @property
    def tangential_norm(self) -> np.ndarray:
        return np.linalg.norm(self.grad[:, :2], axis=1)


def tangent_projector(g: np.ndarray) -> np.ndarray:
    """``Id - g g^T / (1 + |g|^2)``, the inverse of ``Id + g g^T``; batched over leading axes."""
    outer = g[..., :, None] * g[..., None, :]
    denom = 1.0 + np.sum(g * g, axis=-1)
    return np.eye(2) - outer / denom[..., None, None]


def synthesize_phase(f1: np.ndarray, surface: SurfaceProfile, grid: Grid) -> PhaseField:
    """Phase gradient from the first dual potential.

    ``(Phi_x1, Phi_x2) = (Id - g g^T / (1 + |g|^2)) (D f1 / 2 + n1 g)``
    with ``g = grad f``, and ``Phi_x3 = Phi_x1 g_1 + Phi_x2 g_2`` so that the
    gradient is tangent to the surface. The halving of ``D f1`` is only
    valid when ``f1`` comes from a converged dual solve whose maps satisfy
    the refraction/reflection compatibility relation.
    """
    x = grid.nodes
    df1 = central_gradient(f1, grid)
    g = surface.grad_f(x)
    rhs = 0.5 * df1 + surface.n1 * g
    horiz = np.einsum("nij,nj->ni", tangent_projector(g), rhs)
    vert = horiz[:, 0] * g[:, 0] + horiz[:, 1] * g[:, 1]
    grad = np.column_stack([horiz, vert])

    ny, nx = grid.shape
    h = grid.spacing
    p1 = horiz[:, 0].reshape(ny, nx)
    p2 = horiz[:, 1].reshape(ny, nx)
    curl = np.full((ny, nx), np.nan)
    curl[1:-1, 1:-1] = ((p1[2:, 1:-1] - p1[:-2, 1:-1]) / (2 * h[1])
                        - (p2[1:-1, 2:] - p2[1:-1, :-2]) / (2 * h[0]))
    return PhaseField(grid, grad, curl.ravel())


def tangentiality_residual(phase: PhaseField, surface: SurfaceProfile) -> float:
    g = surface.grad_f(phase.grid.nodes)
    p = phase.grad
    return float(np.max(np.abs(-p[:, 0] * g[:, 0] - p[:, 1] * g[:, 1] + p[:, 2])))


def trace_refraction(x, t1x, surface: SurfaceProfile) -> np.ndarray:
    """Unit direction from ``(x, f(x))`` to ``(T1 x, beta)``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(t1x, dtype=float) - x
    height = surface.beta - surface.f(x)
    v = np.concatenate([d, np.broadcast_to(height[..., None], d.shape[:-1] + (1,))], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def trace_reflection(x, t2x, surface: SurfaceProfile) -> np.ndarray:
    """Unit direction from ``(x, f(x))`` back to ``(T2 x, 0)``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(t2x, dtype=float) - x
    depth = -surface.f(x)
    v = np.concatenate([d, np.broadcast_to(depth[..., None], d.shape[:-1] + (1,))], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class GSLResidual:
    refraction: np.ndarray
    reflection: np.ndarray
    lam: np.ndarray
    lam_reflect: np.ndarray

    @property
    def refraction_max(self) -> float:
        return float(np.max(self.refraction))

    @property
    def reflection_max(self) -> float:
        return float(np.max(self.reflection))


def _normal_split(v, normal):
    """Multiplier of ``normal`` in ``v`` and the norm of what is left over."""
    lam = np.sum(v * normal, axis=-1) / np.sum(normal * normal, axis=-1)
    rest = v - lam[..., None] * normal
    return lam, np.linalg.norm(rest, axis=-1)


def gsl_residual_from_coords(x, t1x, t2x, grad_phi, surface: SurfaceProfile) -> GSLResidual:
    """Generalized Snell residuals for explicit target coordinates.

    ``n1 e - n2 m - grad Phi`` and ``n1 e - n1 r - grad Phi`` must be
    multiples of the normal ``(-grad f, 1)``; the residual is the norm of
    the part orthogonal to it and the multipliers are returned alongside.
    """
    x = np.asarray(x, dtype=float)
    n1, n2 = surface.n1, surface.n2
    m = trace_refraction(x, t1x, surface)
    r = trace_reflection(x, t2x, surface)
    g = surface.grad_f(x)
    normal = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
    v = n1 * E_INCIDENT - n2 * m - grad_phi
    w = n1 * E_INCIDENT - n1 * r - grad_phi
    lam, res_v = _normal_split(v, normal)
    lam_r, res_w = _normal_split(w, normal)
    return GSLResidual(res_v, res_w, lam, lam_r)


def gsl_residual(phase: PhaseField, maps: MapField, surface: SurfaceProfile) -> GSLResidual:
    """Generalized Snell residuals at every source node, using the extracted maps as ``(T1, T2)``."""
    if maps.targets.shape != (phase.grid.size, 2):
        raise ValueError("phase and maps must live on the same source grid with two targets")
    return gsl_residual_from_coords(phase.grid.nodes, maps.target_coords(0), maps.target_coords(1),
                                    phase.grad, surface)


def compatibility_from_coords(x, t1x, t2x, surface: SurfaceProfile) -> np.ndarray:
    """Per-node residual vector of the relation tying the refraction and reflection maps."""
    x = np.asarray(x, dtype=float)
    fx = surface.f(x)[..., None]
    g = surface.grad_f(x)
    top = surface.beta - fx
    d1 = np.asarray(t1x, dtype=float) - x
    d2 = np.asarray(t2x, dtype=float) - x
    left = (d2 - fx * g) / np.sqrt(np.sum(d2 * d2, axis=-1, keepdims=True) + fx * fx)
    right = (d1 + top * g) / np.sqrt(np.sum(d1 * d1, axis=-1, keepdims=True) + top * top)
    return left - (surface.n2 / surface.n1) * right


def t1_t2_compatibility(maps: MapField, surface: SurfaceProfile) -> float:
    """Largest norm of the refraction/reflection compatibility residual over source nodes."""
    res = compatibility_from_coords(maps.grids[0].nodes, maps.target_coords(0), maps.target_coords(1), surface)
    return float(np.max(np.linalg.norm(res, axis=-1)))


def interior_max(values: np.ndarray, grid: Grid, mask=None) -> float:
    keep = interior_mask(grid) if mask is None else mask
    return float(np.max(values[keep])) if np.any(keep) else float("nan")
