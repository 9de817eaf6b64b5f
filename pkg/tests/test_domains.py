import numpy as np
import pytest

from metalens_mmot.domains import DomainError, build_grid, build_measure, check_mass_balance


def test_cell_centers_2x2():
    g = build_grid((0, 0), (1, 1), (2, 2))
    np.testing.assert_allclose(g.nodes, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    assert g.cell_area == pytest.approx(0.25)
    assert g.shape == (2, 2)


def test_single_node_is_midpoint():
    g = build_grid((0, 0), (1, 1), (1, 1))
    np.testing.assert_allclose(g.nodes, [[0.5, 0.5]])


def test_row_major_order_x_fastest():
    g = build_grid((0, 0), (3, 2), (3, 2))
    np.testing.assert_allclose(g.nodes[:3, 1], 0.5)
    np.testing.assert_allclose(g.nodes[:3, 0], [0.5, 1.5, 2.5])


def test_nodes_strictly_inside():
    g = build_grid((-1, 2), (0.5, 3), (7, 5))
    assert np.all(g.nodes > [-1, 2]) and np.all(g.nodes < [0.5, 3])


@pytest.mark.parametrize("res", [(0, 2), (2, 0), (-1, 3)])
def test_degenerate_resolution(res):
    with pytest.raises(DomainError, match="degenerate resolution"):
        build_grid((0, 0), (1, 1), res)


def test_degenerate_box():
    with pytest.raises(DomainError, match="degenerate box"):
        build_grid((0, 0), (0, 1), (2, 2))


def test_nodes_read_only():
    g = build_grid((0, 0), (1, 1), (2, 2))
    with pytest.raises(ValueError):
        g.nodes[0, 0] = 3.0


def test_uniform_measure_weights():
    m = build_measure(build_grid((0, 0), (1, 1), (2, 2)), "uniform")
    np.testing.assert_allclose(m.weights, 0.25)
    assert m.total_mass == pytest.approx(1.0)


def test_array_density_times_cell_area():
    m = build_measure(build_grid((0, 0), (1, 1), (2, 2)), [1, 2, 3, 4])
    np.testing.assert_allclose(m.weights, [0.25, 0.5, 0.75, 1.0])


def test_negative_density_rejected():
    with pytest.raises(DomainError, match="negative density"):
        build_measure(build_grid((0, 0), (1, 1), (2, 2)), [1, -1, 1, 1])


def test_density_length_mismatch():
    with pytest.raises(DomainError, match="length mismatch"):
        build_measure(build_grid((0, 0), (1, 1), (2, 2)), [1, 2, 3])


def test_gaussian_density_peaks_at_center():
    g = build_grid((0, 0), (1, 1), (5, 5))
    m = build_measure(g, {"type": "gaussian", "center": [0.5, 0.5], "sigma": 0.2})
    assert int(np.argmax(m.weights)) == 12


def test_mass_sum_matches_density_sum():
    g = build_grid((0, 0), (2, 1), (8, 3))
    vals = np.linspace(0.1, 2.0, g.size)
    m = build_measure(g, vals)
    assert m.total_mass == pytest.approx(g.cell_area * vals.sum(), rel=1e-14)


def _measure_with_mass(mass):
    return build_measure(build_grid((0, 0), (1, 1), (1, 1)), [mass])


def test_balanced_masses():
    rep = check_mass_balance([_measure_with_mass(1.0)] * 3, rel_tol=1e-6)
    assert rep.balanced


def test_unbalanced_rescale():
    ms = [_measure_with_mass(1.0), _measure_with_mass(0.9), _measure_with_mass(1.0)]
    rep = check_mass_balance(ms, rel_tol=1e-6)
    assert not rep.balanced
    assert rep.deviations[1] == pytest.approx(0.1)
    np.testing.assert_allclose(rep.rescaled[1].weights, ms[1].weights * 10 / 9)


def test_rescaled_masses_equal_first():
    g = build_grid((0, 0), (1, 1), (4, 4))
    rng = np.random.default_rng(3)
    ms = [build_measure(g, rng.random(g.size) + 0.1) for _ in range(3)]
    rep = check_mass_balance(ms)
    for m in rep.rescaled:
        assert m.total_mass == pytest.approx(rep.masses[0], rel=1e-14)


def test_need_two_measures():
    with pytest.raises(DomainError, match="need >= 2 measures"):
        check_mass_balance([_measure_with_mass(1.0)])
