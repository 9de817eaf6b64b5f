import numpy as np
import pytest

from metalens_mmot.cost import distance_sum_cost
from metalens_mmot.ctransform import PotentialError, PotentialVector
from metalens_mmot.domains import build_grid, build_measure
from metalens_mmot.dual_solver import kantorovich_I, maximize_dual, monge_bruteforce
from metalens_mmot.monge import (
    MapField,
    c_superdifferential,
    central_gradient,
    extract_maps,
    pushforward_check,
    representation_residual,
    transport_cost,
)

from conftest import line_grid, uniform_measures


def _shifted_dual(grids):
    pots = (np.array([0.5, 0.5]), np.array([0.0, 0.5]), np.array([0.0, 0.0]))
    return PotentialVector(pots, grids)


def test_superdifferential_shifted(shifted):
    grids, _, c = shifted
    F = _shifted_dual(grids)
    assert c_superdifferential(F, 0, c) == [(0, 0)]
    assert c_superdifferential(F, 1, c) == [(0, 1), (1, 1)]


def test_superdifferential_infinite_tolerance(shifted):
    grids, _, c = shifted
    assert len(c_superdifferential(_shifted_dual(grids), 0, c, tol_tie=np.inf)) == 4


def test_superdifferential_empty_raises(shifted):
    grids, _, c = shifted
    F = PotentialVector((np.array([-1.0, -1.0]), np.zeros(2), np.zeros(2)), grids)
    with pytest.raises(PotentialError, match="conjugacy violated"):
        c_superdifferential(F, 0, c)


def test_extract_maps_shifted(shifted):
    grids, ms, c = shifted
    maps = extract_maps(_shifted_dual(grids), c)
    np.testing.assert_array_equal(maps.targets[:, 0], [0, 0])
    np.testing.assert_array_equal(maps.multiplicity, [1, 2])
    assert maps.sv_fraction == 0.5
    np.testing.assert_allclose(maps.target_coords(0)[:, 0], [0.5, 0.5])
    assert pushforward_check(maps, ms) == pytest.approx((0.5, 0.0))


def test_identity_metalens_maps(identity_metalens):
    grids, ms, c, _ = identity_metalens
    F, trace = maximize_dual(c, ms)
    maps = extract_maps(F, c)
    for k in range(2):
        np.testing.assert_array_equal(maps.targets[:, k], np.arange(9))
    assert maps.sv_fraction == 1.0
    for i in range(9):
        assert c_superdifferential(F, i, c) == [(i, i)]
    assert transport_cost(maps, c, ms[0]) == pytest.approx(2.5)
    assert representation_residual(F, maps, c) == pytest.approx(0.0, abs=1e-12)


def test_single_node_grids():
    grids = tuple(build_grid((0, 0), (1, 1), (1, 1)) for _ in range(3))
    c = distance_sum_cost(3)
    F, _ = maximize_dual(c, uniform_measures(grids))
    maps = extract_maps(F, c)
    assert maps.sv_fraction == 1.0 and maps.targets.tolist() == [[0, 0]]


def test_pushforward_permutation():
    g = line_grid([0, 1, 2])
    ms = uniform_measures((g, g))
    maps = MapField(np.array([[2], [0], [1]]), np.ones(3, dtype=int), (g, g))
    assert pushforward_check(maps, ms) == (0.0,)
    assert maps.is_bijection()


def test_pushforward_constant_map():
    g = line_grid([0, 1])
    ms = uniform_measures((g, g))
    maps = MapField(np.array([[0], [0]]), np.ones(2, dtype=int), (g, g))
    assert pushforward_check(maps, ms) == pytest.approx((0.5,))


def test_transport_cost_bruteforce_maps(shifted):
    grids, ms, c = shifted
    res = monge_bruteforce(c, ms)
    maps = MapField(np.column_stack(res.maps), np.ones(2, dtype=int), grids)
    assert transport_cost(maps, c, ms[0]) == pytest.approx(0.75)
    assert transport_cost(maps, c, np.zeros(2)) == 0.0


def test_transport_cost_tight_on_selected_tuples(shifted):
    # equality c = sum f_j holds along the selected tuples; the integral equals I(F)
    # only when the maps push mu_1 onto every target measure
    grids, ms, c = shifted
    F, _ = maximize_dual(c, ms)
    maps = extract_maps(F, c)
    along = ms[0].weights @ (F[0] + F[1][maps.targets[:, 0]] + F[2][maps.targets[:, 1]])
    assert transport_cost(maps, c, ms[0]) == pytest.approx(along, abs=1e-12)
    assert max(pushforward_check(maps, ms)) > 0
    assert transport_cost(maps, c, ms[0]) < kantorovich_I(F, ms)


@pytest.mark.parametrize("a,b", [(0.2, -0.1), (0.4, 0.3), (-0.3, 0.1), (0.0, 0.45)])
def test_transport_cost_at_least_dual_for_bijections(a, b):
    pts = np.arange(4.0)
    grids = (line_grid(pts), line_grid(pts + a), line_grid(pts + b))
    c = distance_sum_cost(3, power=2)
    ms = uniform_measures(grids)
    F, _ = maximize_dual(c, ms)
    maps = extract_maps(F, c)
    assert max(pushforward_check(maps, ms)) == 0
    assert transport_cost(maps, c, ms[0]) >= kantorovich_I(F, ms) - 1e-12


def test_stencil_undefined():
    g = build_grid((0, 0), (1, 1), (2, 3))
    with pytest.raises(ValueError, match="stencil undefined"):
        central_gradient(np.zeros(g.size), g)


def test_central_gradient_linear_exact():
    g = build_grid((0, 0), (2, 1), (5, 4))
    v = 3 * g.nodes[:, 0] - 2 * g.nodes[:, 1]
    np.testing.assert_allclose(central_gradient(v, g), np.tile([3, -2], (g.size, 1)), atol=1e-12)


def test_threads_do_not_change_maps(identity_metalens):
    grids, ms, c, _ = identity_metalens
    rng = np.random.default_rng(0)
    F, _ = maximize_dual(c, [build_measure(g, rng.random(g.size) + 0.5) for g in grids][:1] * 3)
    a = extract_maps(F, c, threads=1)
    b = extract_maps(F, c, threads=4)
    assert np.array_equal(a.targets, b.targets) and np.array_equal(a.multiplicity, b.multiplicity)
