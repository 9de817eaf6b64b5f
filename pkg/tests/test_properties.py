"""Randomized invariants over small tabulated instances."""

import numpy as np
from hypothesis import given, settings, strategies as st

from metalens_mmot.cost import affine_surface, tabulated_cost
from metalens_mmot.ctransform import (
    PotentialVector,
    c_transform_j,
    conjugate_sweep,
    is_admissible,
    normalize_potentials,
)
from metalens_mmot.domains import build_grid, build_measure
from metalens_mmot.dual_solver import kantorovich_I
from metalens_mmot.metalens import synthesize_phase, tangent_projector, tangentiality_residual

from conftest import line_grid

SETTINGS = settings(max_examples=60, deadline=None)


@st.composite
def instances(draw):
    n = draw(st.integers(2, 3))
    sizes = draw(st.lists(st.integers(1, 4), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    grids = tuple(line_grid(np.arange(s, dtype=float)) for s in sizes)
    cost = tabulated_cost(rng.uniform(-3, 3, sizes))
    pots = tuple(rng.uniform(-2, 2, s) for s in sizes)
    measures = []
    for g in grids:
        m = build_measure(g, rng.uniform(0.1, 1.0, g.size))
        measures.append(m.scaled(1.0 / m.total_mass))
    return grids, cost, pots, measures, rng


def _admissible_start(grids, cost, pots):
    """Random potentials made admissible by replacing the last entry with its transform."""
    F = PotentialVector(pots, grids)
    return F.replace(len(grids) - 1, c_transform_j(F, len(grids) - 1, cost))


@SETTINGS
@given(instances(), st.data())
def test_transform_output_admissible(inst, data):
    grids, cost, pots, _, _ = inst
    F = PotentialVector(pots, grids)
    j = data.draw(st.integers(0, len(grids) - 1))
    assert is_admissible(F.replace(j, c_transform_j(F, j, cost)), cost)


@SETTINGS
@given(instances(), st.data())
def test_transform_is_antitone(inst, data):
    grids, cost, pots, _, rng = inst
    j = data.draw(st.integers(0, len(grids) - 1))
    F = PotentialVector(pots, grids)
    bumped = [p + (0 if k == j else rng.uniform(0, 1, p.size)) for k, p in enumerate(pots)]
    G = PotentialVector(tuple(bumped), grids)
    assert np.all(c_transform_j(G, j, cost) <= c_transform_j(F, j, cost) + 1e-12)


@SETTINGS
@given(instances(), st.data())
def test_transform_idempotent(inst, data):
    grids, cost, pots, _, _ = inst
    j = data.draw(st.integers(0, len(grids) - 1))
    F = PotentialVector(pots, grids)
    once = F.replace(j, c_transform_j(F, j, cost))
    np.testing.assert_array_equal(c_transform_j(once, j, cost), once[j])


@SETTINGS
@given(instances())
def test_normalization_preserves_value(inst):
    grids, cost, pots, measures, _ = inst
    F = PotentialVector(pots, grids)
    G = normalize_potentials(F, measures)
    assert abs(kantorovich_I(G, measures) - kantorovich_I(F, measures)) <= 1e-12 * (1 + abs(kantorovich_I(F, measures)))
    assert all(np.min(G[k]) == 0.0 for k in range(len(grids) - 1))
    np.testing.assert_allclose(sum(np.min(f) for f in F.potentials), sum(np.min(f) for f in G.potentials), atol=1e-12)


@SETTINGS
@given(instances())
def test_sweep_does_not_decrease_value(inst):
    grids, cost, pots, measures, _ = inst
    F = _admissible_start(grids, cost, pots)
    before = kantorovich_I(F, measures)
    G = conjugate_sweep(F, cost)
    assert kantorovich_I(G, measures) >= before - 1e-12 * (1 + abs(before))
    assert all(np.all(G[k] >= F[k] - 1e-12) for k in range(len(grids)))


@SETTINGS
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_projector_inverts_metric(g):
    g = np.asarray(g)
    P = tangent_projector(g)
    np.testing.assert_allclose(P @ (np.eye(2) + np.outer(g, g)), np.eye(2), atol=1e-12)


@SETTINGS
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.integers(0, 2**32 - 1))
def test_phase_tangent_to_surface(a1, a2, seed):
    grid = build_grid((0, 0), (1, 1), (5, 4))
    surface = affine_surface((a1, a2), 1.0, 2.0, 1.2, 1.5)
    f1 = np.random.default_rng(seed).normal(size=grid.size)
    phase = synthesize_phase(f1, surface, grid)
    assert tangentiality_residual(phase, surface) <= 1e-12
