import numpy as np
import pytest
from scipy.optimize import brentq

from metalens_mmot.cost import affine_surface, constant_surface, tabulated_surface
from metalens_mmot.domains import build_grid
from metalens_mmot.dual_solver import maximize_dual
from metalens_mmot.metalens import (
    compatibility_from_coords,
    gsl_residual,
    gsl_residual_from_coords,
    synthesize_phase,
    t1_t2_compatibility,
    tangent_projector,
    tangentiality_residual,
    trace_reflection,
    trace_refraction,
)
from metalens_mmot.monge import extract_maps

FLAT = constant_surface(1.0, 2.0, 1.0, 1.5)
GRID = build_grid((0, 0), (1, 1), (5, 5))


def test_flat_phase_is_half_gradient():
    f1 = 0.7 * GRID.nodes[:, 0] + 0.2 * GRID.nodes[:, 1] ** 2
    ph = synthesize_phase(f1, FLAT, GRID)
    x = GRID.nodes
    inner = (np.abs(x - 0.5) < 0.3).all(axis=1)
    np.testing.assert_allclose(ph.grad[inner, 0], 0.35, atol=1e-12)
    np.testing.assert_allclose(ph.grad[inner, 1], 0.2 * x[inner, 1], atol=1e-12)
    np.testing.assert_allclose(ph.grad[:, 2], 0.0, atol=0)


def test_flat_phase_from_linear_potential():
    f1 = -0.86205 * GRID.nodes[:, 0]
    ph = synthesize_phase(f1, FLAT, GRID)
    np.testing.assert_allclose(ph.grad, np.tile([-0.431025, 0, 0], (GRID.size, 1)), atol=1e-12)


def test_tilted_phase_projector():
    s = affine_surface((1.0, 0.0), 0.2, 2.0, 1.0, 1.5)
    ph = synthesize_phase(np.zeros(GRID.size), s, GRID)
    np.testing.assert_allclose(ph.grad, np.tile([0.5, 0.0, 0.5], (GRID.size, 1)), atol=1e-14)


def test_tangentiality_exact_on_curved_surface():
    g = build_grid((0, 0), (1, 1), (9, 7))
    vals = 0.8 + 0.1 * np.sin(3 * g.nodes[:, 0]) * np.cos(2 * g.nodes[:, 1])
    s = tabulated_surface(g, vals, 2.0, 1.2, 1.6)
    rng = np.random.default_rng(0)
    ph = synthesize_phase(rng.random(g.size), s, g)
    assert tangentiality_residual(ph, s) <= 1e-12


def test_projector_inverts_rank_one_update():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(50, 2))
    lhs = np.eye(2) + g[:, :, None] * g[:, None, :]
    np.testing.assert_allclose(lhs @ tangent_projector(g), np.broadcast_to(np.eye(2), lhs.shape), atol=1e-12)


def test_curl_of_gradient_field_vanishes():
    g = build_grid((0, 0), (1, 1), (8, 8))
    f1 = g.nodes[:, 0] ** 2 + g.nodes[:, 0] * g.nodes[:, 1]
    ph = synthesize_phase(f1, FLAT, g)
    inner = np.isfinite(ph.curl)
    assert inner.sum() == 36
    assert np.max(np.abs(ph.curl[inner])) < 1e-10
    assert np.all(np.isnan(ph.curl[~inner]))


def test_stencil_requirement():
    with pytest.raises(ValueError):
        synthesize_phase(np.zeros(4), FLAT, build_grid((0, 0), (1, 1), (2, 2)))


def test_refraction_direction():
    m = trace_refraction((0, 0), (0.3, 0), FLAT)
    np.testing.assert_allclose(m, (0.28735, 0, 0.95782), atol=1e-5)
    np.testing.assert_allclose(trace_refraction((0.2, 0.4), (0.2, 0.4), FLAT), (0, 0, 1))
    tall = constant_surface(1.0, 1e6, 1.0, 1.5)
    assert trace_refraction((0, 0), (0.3, 0), tall)[2] > 1 - 1e-12


def test_reflection_direction():
    r = trace_reflection((0, 0), (0.3, 0), FLAT)
    np.testing.assert_allclose(r, (0.28735, 0, -0.95782), atol=1e-5)
    np.testing.assert_allclose(trace_reflection((0.2, 0.4), (0.2, 0.4), FLAT), (0, 0, -1))
    low = constant_surface(1e-6, 2.0, 1.0, 1.5)
    r = trace_reflection((0, 0), (0.3, 0), low)
    assert -1e-5 < r[2] < 0


def test_unit_norm_directions():
    rng = np.random.default_rng(2)
    x, t = rng.random((2, 100, 2))
    s = affine_surface((0.1, 0.1), 0.8, 2.0, 1.0, 1.5)
    np.testing.assert_allclose(np.linalg.norm(trace_refraction(x, t, s), axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(trace_reflection(x, t, s), axis=1), 1, atol=1e-12)


def test_gsl_refraction_hand_example():
    x = np.zeros((1, 2))
    t1 = np.array([[0.3, 0.0]])
    t2 = np.zeros((1, 2))
    phi = np.array([[-1.5 * 0.3 / np.sqrt(1.09), 0.0, 0.0]])
    res = gsl_residual_from_coords(x, t1, t2, phi, FLAT)
    assert res.refraction_max <= 1e-12
    res0 = gsl_residual_from_coords(x, t1, t2, np.zeros((1, 3)), FLAT)
    assert res0.refraction_max == pytest.approx(0.43102, abs=1e-5)


def test_gsl_identity_maps_zero_phase():
    x = GRID.nodes
    res = gsl_residual_from_coords(x, x, x, np.zeros((GRID.size, 3)), FLAT)
    assert res.refraction_max == 0 and res.reflection_max == 0
    np.testing.assert_allclose(res.lam, 1.0 - 1.5)
    np.testing.assert_allclose(res.lam_reflect, 2.0)


def test_compatibility_root():
    t = brentq(lambda t: t / np.sqrt(t * t + 1) - 1.5 * 0.3 / np.sqrt(1.09), 0, 5)
    assert t == pytest.approx(0.47767, abs=1e-5)
    x = np.zeros((1, 2))
    res = compatibility_from_coords(x, np.array([[0.3, 0]]), np.array([[0.47767, 0]]), FLAT)
    assert np.linalg.norm(res) <= 1e-5


def test_compatibility_identity_zero():
    x = GRID.nodes
    assert np.max(np.abs(compatibility_from_coords(x, x, x, FLAT))) == 0


def test_compatibility_equal_maps_nonzero():
    x = np.zeros((1, 2))
    t = np.array([[0.3, 0.0]])
    res = compatibility_from_coords(x, t, t, FLAT)
    np.testing.assert_allclose(res[0], (1 - 1.5) * t[0] / np.sqrt(1.09), atol=1e-14)


def test_identity_instance_end_to_end(identity_metalens):
    grids, ms, c, s = identity_metalens
    F, _ = maximize_dual(c, ms)
    maps = extract_maps(F, c)
    ph = synthesize_phase(F[0], s, grids[0])
    res = gsl_residual(ph, maps, s)
    assert res.refraction_max <= 1e-9 and res.reflection_max <= 1e-9
    assert tangentiality_residual(ph, s) <= 1e-12
    assert t1_t2_compatibility(maps, s) == 0.0
