"""Orthonormal tensor bases, phase mass matrices, coupling, injection."""

import math

import numpy as np
import pytest

from cutagg import (QuadratureRule, Species, build_cutcell_mesh, build_grid,
                    identify_sources, mesh_from_fractions, partition_strips,
                    build_agglomeration, assemble_injection, agglomerate_mass,
                    inject, restrict, coupling_matrix, coupling_cells,
                    phase_mass_matrix, species_mass_blocks, tensor_basis)
from cutagg.algebra import cell_offset, gauss_01, project_reference
from cutagg.geometry import axis_plane
from cutagg.parallel import RankNetwork

A, B = Species.A, Species.B


def mass_1d_oracle(f: float) -> np.ndarray:
    """Closed-form p=1 mass over [0, f] of the reference cell.

    Modes 1 and sqrt(3)(2 xi - 1); integrals done by hand.
    """
    off = math.sqrt(3.0) * f * (f - 1.0)
    return np.array([[f, off], [off, ((2.0 * f - 1.0) ** 3 + 1.0) / 2.0]])


def test_gauss_01_integrates_polynomials_exactly():
    for q in (1, 2, 3, 5):
        x, w = gauss_01(q)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        for k in range(2 * q):
            got = float((w * x**k).sum())
            assert got == pytest.approx(1.0 / (k + 1), abs=1e-13)


def test_tensor_basis_mode_count_and_order():
    b = tensor_basis(2, 1)
    assert b.n_modes == 4
    assert [tuple(m) for m in b.modes] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    b3 = tensor_basis(3, 2)
    assert b3.n_modes == 27
    degs = [int(m.sum()) for m in b3.modes]
    assert degs == sorted(degs)
    with pytest.raises(ValueError):
        tensor_basis(4, 1)
    with pytest.raises(ValueError):
        tensor_basis(2, -1)


def test_basis_orthonormal_on_reference_cell():
    for dim, p in ((1, 3), (2, 2), (3, 1)):
        b = tensor_basis(dim, p)
        M = phase_mass_matrix(b, np.zeros((1, dim)), [1.0], [1.0])
        assert np.allclose(M, np.eye(b.n_modes), atol=1e-13)


def test_phase_mass_1d_oracle():
    b = tensor_basis(1, 1)
    for f in (0.5, 0.3, 0.875):
        M = phase_mass_matrix(b, [[0.0]], [f], [1.0])
        assert np.allclose(M, mass_1d_oracle(f), atol=1e-13)


def test_phase_mass_2d_half_cell_matches_tensor_oracle():
    b = tensor_basis(2, 1)
    # region [0, 0.5] x [0, 1] as two stacked half-size boxes
    origins = [[0.0, 0.0], [0.0, 0.5]]
    M = phase_mass_matrix(b, origins, [0.5, 0.5], [1.0, 1.0])
    m1 = mass_1d_oracle(0.5)
    want = np.zeros((4, 4))
    modes = [tuple(m) for m in b.modes]
    for i, (a1, a2) in enumerate(modes):
        for j, (c1, c2) in enumerate(modes):
            want[i, j] = m1[a1, c1] * (1.0 if a2 == c2 else 0.0)
    assert np.allclose(M, want, atol=1e-13)


def test_phase_mass_weights_scale_linearly():
    b = tensor_basis(2, 1)
    M1 = phase_mass_matrix(b, [[0.25, 0.25]], [0.5], [1.0])
    M2 = phase_mass_matrix(b, [[0.25, 0.25]], [0.5], [0.375])
    assert np.allclose(M2, 0.375 * M1, atol=1e-14)
    empty = phase_mass_matrix(b, np.zeros((0, 2)), [], [])
    assert np.array_equal(empty, np.zeros((4, 4)))


def test_coupling_identity_at_zero_offset():
    for dim, p in ((1, 2), (2, 1), (3, 1)):
        b = tensor_basis(dim, p)
        assert np.allclose(coupling_matrix(b, np.zeros(dim)),
                           np.eye(b.n_modes), atol=1e-13)


def test_coupling_composition_exact():
    """Shift by two cells equals two single-cell shifts composed."""
    for dim, p in ((1, 3), (2, 2)):
        b = tensor_basis(dim, p)
        d1 = np.zeros(dim); d1[0] = -1.0
        d2 = np.zeros(dim); d2[0] = -1.0
        lhs = coupling_matrix(b, d1 + d2)
        rhs = coupling_matrix(b, d1) @ coupling_matrix(b, d2)
        scale = np.abs(lhs).max()
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(scale, 1.0)
    # mixed-axis composition in 2d
    b = tensor_basis(2, 2)
    da = np.array([1.0, 0.0]); db = np.array([0.0, -1.0])
    assert np.abs(coupling_matrix(b, da + db)
                  - coupling_matrix(b, da) @ coupling_matrix(b, db)).max() <= 1e-12


def test_coupling_shifted_mode_evaluation():
    """C(delta) re-expands the shifted modes exactly (polynomial identity)."""
    b = tensor_basis(2, 2)
    delta = np.array([2.0, -1.0])
    C = coupling_matrix(b, delta)
    pts = np.random.default_rng(5).random((40, 2))
    want = b.eval(pts + delta)          # modes of the displaced cell
    got = b.eval(pts) @ C               # re-expanded in local modes
    assert np.abs(got - want).max() <= 1e-10


def test_cell_offset_and_coupling_cells():
    g = build_grid(2, (3, 3), (0.0, 0.0), (1.0, 1.0))
    b = tensor_basis(2, 1)
    assert np.array_equal(cell_offset(g, 5, 4), [0.0, 1.0])
    assert np.array_equal(cell_offset(g, 1, 7), [-2.0, 0.0])
    assert np.allclose(coupling_cells(b, g, 4, 4), np.eye(4), atol=1e-14)


def test_species_mass_blocks_full_empty_cut():
    g = build_grid(2, (2, 1), (0.0, 0.0), (2.0, 1.0))
    f = axis_plane(2, 0, 1.2)
    rule = QuadratureRule(max_depth=4)
    m = build_cutcell_mesh(g, f, 0.0, rule)
    b = tensor_basis(2, 1)
    blocks = species_mass_blocks(m, f, rule, b, A)
    assert set(blocks) == {0, 1}
    assert np.array_equal(blocks[0], np.eye(4))  # full cell
    cut = blocks[1]
    assert np.allclose(cut, cut.T, atol=1e-13)
    ev = np.linalg.eigvalsh(cut)
    assert ev.min() > 0.0
    assert cut[0, 0] == pytest.approx(m.fraction(1, A), abs=1e-12)


def _plane_fixture(offset=1.2, alpha=0.3, degree=1):
    g = build_grid(2, (2, 1), (0.0, 0.0), (2.0, 1.0))
    f = axis_plane(2, 0, offset)
    rule = QuadratureRule(max_depth=5)
    m = build_cutcell_mesh(g, f, 0.0, rule)
    net = RankNetwork(partition_strips(g, 1))
    agg = build_agglomeration(m, m, alpha, "static", net)
    b = tensor_basis(2, degree)
    blocks = species_mass_blocks(m, f, rule, b, A)
    op = assemble_injection(agg, b, g, m, A)
    return g, m, b, blocks, op


def test_assemble_injection_structure():
    g, m, b, blocks, op = _plane_fixture()
    assert op.cells == (0, 1)
    assert op.kept == (0,)
    assert op.roots == {1: 0}
    want_block = coupling_cells(b, g, 1, 0)
    assert np.allclose(op.blocks[1], want_block, atol=1e-13)
    dense = op.to_dense()
    assert dense.shape == (8, 4)
    assert np.array_equal(dense[:4], np.eye(4))
    assert np.allclose(dense[4:], want_block, atol=1e-13)


def test_agglomerate_mass_adds_member_contribution():
    g, m, b, blocks, op = _plane_fixture()
    agg_mass = agglomerate_mass(op, blocks)
    C = op.blocks[1]
    want = blocks[0] + C.T @ blocks[1] @ C
    assert np.allclose(agg_mass[0], want, atol=1e-13)
    ev = np.linalg.eigvalsh(agg_mass[0])
    assert ev.min() > 1.0 - 1e-12  # union mass dominates the full kept cell


def test_inject_restrict_round_trip_random():
    g, m, b, blocks, op = _plane_fixture()
    rng = np.random.default_rng(19)
    for _ in range(50):
        coarse = {0: rng.normal(size=4)}
        fine = inject(op, coarse)
        back = restrict(op, blocks, fine)
        err = np.linalg.norm(back[0] - coarse[0]) / np.linalg.norm(coarse[0])
        assert err <= 1e-10


def test_polynomial_reproduction_through_agglomeration():
    g, m, b, blocks, op = _plane_fixture()
    spacing = np.asarray(g.spacing)

    def poly(x):  # bilinear, inside the p=1 tensor space
        return 2.0 * x[:, 0] - 3.0 * x[:, 1] + 0.25 * x[:, 0] * x[:, 1] + 1.0

    fine = {}
    for c in (0, 1):
        org = g.cell_origin(c)
        fine[c] = project_reference(b, lambda xi: poly(org + xi * spacing))
    coarse = restrict(op, blocks, fine)
    rebuilt = inject(op, coarse)
    pts = np.random.default_rng(23).random((50, 2))
    for c in (0, 1):
        org = g.cell_origin(c)
        vals = b.eval(pts) @ rebuilt[c]
        want = poly(org + pts * spacing)
        assert np.abs(vals - want).max() <= 1e-10


def test_restrict_rejects_singular_agglomerate():
    g, m, b, blocks, op = _plane_fixture()
    dead = {0: np.zeros((4, 4)), 1: np.zeros((4, 4))}
    with pytest.raises(ValueError, match="singular"):
        restrict(op, dead, {0: np.ones(4), 1: np.ones(4)})


def test_vanished_sources_excluded_from_operator():
    """A mapped cell absent from the next mesh is bookkeeping, not a row."""
    g = build_grid(2, (3, 1), (0.0, 0.0), (3.0, 1.0))
    prev = mesh_from_fractions(g, np.array([1.0, 0.2, 0.0]))
    nxt = mesh_from_fractions(g, np.array([1.0, 0.0, 0.0]),
                              near_interface=np.array([True, True, False]))
    net = RankNetwork(partition_strips(g, 1))
    agg = build_agglomeration(prev, nxt, 0.3, "moving", net)
    assert {p.source: p.target for p in agg.pairs[A]} == {1: 0}
    b = tensor_basis(2, 1)
    op = assemble_injection(agg, b, g, nxt, A)
    assert op.cells == (0,)
    assert op.kept == (0,)
    assert op.blocks == {}


def test_three_cell_chain_operator_composes():
    """Level-reduced pair blocks equal the composed per-step couplings."""
    g = build_grid(2, (3, 1), (0.0, 0.0), (3.0, 1.0))
    m = mesh_from_fractions(g, np.array([0.1, 0.1, 0.9]))
    net = RankNetwork(partition_strips(g, 1))
    agg = build_agglomeration(m, m, 0.3, "static", net)
    assert {p.source: p.target for p in agg.pairs[A]} == {0: 2, 1: 2}
    b = tensor_basis(2, 2)
    direct = coupling_cells(b, g, 0, 2)
    stepped = coupling_cells(b, g, 0, 1) @ coupling_cells(b, g, 1, 2)
    assert np.abs(direct - stepped).max() <= 1e-12


def test_project_reference_exact_for_space_members():
    b = tensor_basis(2, 1)
    coeffs = project_reference(b, lambda p: np.ones(len(p)))
    assert np.allclose(coeffs, [1, 0, 0, 0], atol=1e-13)
    target = np.array([0.3, -1.2, 0.8, 0.05])
    coeffs = project_reference(b, lambda p: b.eval(p) @ target)
    assert np.allclose(coeffs, target, atol=1e-12)
