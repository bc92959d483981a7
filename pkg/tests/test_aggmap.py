"""Source filtration, forest construction, levels, and map validation."""

import dataclasses

import numpy as np
import pytest

from cutagg import (AggPair, Species, build_agglomeration, build_grid,
                    determine_levels, identify_sources,
                    interface_speed_violations, mesh_from_fractions,
                    partition_strips, validate_map)
from cutagg.aggmap import UnresolvableIslandError, direct_target_identification
from cutagg.parallel import RankNetwork

A, B = Species.A, Species.B


def strip_mesh(fracs, **kw):
    g = build_grid(2, (len(fracs), 1), (0.0, 0.0), (float(len(fracs)), 1.0))
    return mesh_from_fractions(g, np.asarray(fracs, dtype=float), **kw)


def net_for(mesh, ranks):
    return RankNetwork(partition_strips(mesh.grid, ranks))


# ---------------------------------------------------------------- sources


def test_identify_sources_small_by_either_step():
    prev = strip_mesh([1.0, 0.1, 0.5, 0.9])
    nxt = strip_mesh([1.0, 0.5, 0.2, 0.9])
    src = identify_sources(prev, nxt, 0.3, "moving")
    # cell 1 was small before, cell 2 is small now; both count
    assert src[A].small == {1, 2}
    assert src[A].vanishing == frozenset()
    assert src[A].newborn == frozenset()


def test_identify_sources_vanishing_only_in_moving_mode():
    prev = strip_mesh([1.0, 1.0, 0.2, 0.0])
    nxt = strip_mesh([1.0, 1.0, 0.0, 0.0])
    moving = identify_sources(prev, nxt, 0.3, "moving")
    splitting = identify_sources(prev, nxt, 0.3, "splitting")
    assert moving[A].vanishing == {2}
    assert splitting[A].vanishing == frozenset()


def test_identify_sources_newborn_except_static():
    prev = strip_mesh([1.0, 1.0, 0.0, 0.0])
    nxt = strip_mesh([1.0, 1.0, 0.2, 0.0])
    for mode in ("moving", "splitting"):
        src = identify_sources(prev, nxt, 0.3, mode)
        assert src[A].newborn == {2}
        assert 2 not in src[A].small  # topological sets stay disjoint from small
    static = identify_sources(nxt, nxt, 0.3, "static")
    assert static[A].newborn == frozenset()
    assert static[A].small == {2}


def test_identify_sources_complement_species():
    prev = strip_mesh([1.0, 0.8, 0.0, 0.0])
    src = identify_sources(prev, prev, 0.3, "static")
    # species B fractions are 1 - frac_a: cell 1 holds 0.2
    assert src[B].small == {1}


def test_identify_sources_static_alpha_zero_is_coinciding_only():
    from cutagg import QuadratureRule, build_cutcell_mesh, detect_coinciding_fractions
    from cutagg.geometry import axis_plane
    g = build_grid(2, 4, (0.0, 0.0), (1.0, 1.0))
    m = build_cutcell_mesh(g, axis_plane(2, 0, 0.5), 0.0, QuadratureRule())
    src = identify_sources(m, m, 0.0, "static")
    coin = detect_coinciding_fractions(m)
    for sp in (A, B):
        assert src[sp].small == {c for c, s in coin if s == sp}
        assert src[sp].topological == frozenset()


def test_identify_sources_species_left_domain():
    prev = strip_mesh([0.0, 0.3, 0.4, 0.2])  # B lives here
    nxt = strip_mesh([1.0, 1.0, 1.0, 1.0])   # B gone everywhere
    src = identify_sources(prev, nxt, 0.3, "moving")
    assert src[B].vanishing == frozenset()  # nothing left to transfer into
    assert src[B].small == frozenset()


def test_identify_sources_alpha_validation():
    m = strip_mesh([1.0, 0.5])
    with pytest.raises(ValueError):
        identify_sources(m, m, -0.1, "static")
    with pytest.raises(ValueError):
        identify_sources(m, m, 1.5, "static")
    with pytest.raises(ValueError):
        identify_sources(m, m, 0.3, "wobbly")


def test_small_set_monotone_in_alpha():
    rng = np.random.default_rng(3)
    fr = rng.random(12)
    m = strip_mesh(fr)
    for sp in (A, B):
        prev_small = frozenset()
        for alpha in (0.1, 0.3, 0.5):
            cur = identify_sources(m, m, alpha, "static")[sp].small
            assert prev_small <= cur
            prev_small = cur


# ---------------------------------------------------------------- direct


def test_direct_pairs_two_cell_configuration():
    # one shared cut cell pair: A keeps the low cell, B the high one
    m = strip_mesh([0.8, 0.15])
    part = partition_strips(m.grid, 1)
    src = identify_sources(m, m, 0.3, "static")
    rec_a, deferred_a = direct_target_identification(m, src[A], part, 0, A)
    rec_b, deferred_b = direct_target_identification(m, src[B], part, 0, B)
    assert not deferred_a and not deferred_b
    assert rec_a[1].target == 0  # small A cell joins its full neighbor
    assert rec_b[0].target == 1  # and the B complement goes the other way


def test_direct_target_takes_greatest_fraction():
    m = strip_mesh([0.6, 0.1, 0.9])
    part = partition_strips(m.grid, 1)
    src = identify_sources(m, m, 0.3, "static")
    rec, _ = direct_target_identification(m, src[A], part, 0, A)
    assert rec[1].target == 2


def test_direct_target_tie_breaks_to_lowest_index():
    m = strip_mesh([0.7, 0.1, 0.7])
    part = partition_strips(m.grid, 1)
    src = identify_sources(m, m, 0.3, "static")
    rec, _ = direct_target_identification(m, src[A], part, 0, A)
    assert rec[1].target == 0


def test_direct_defers_source_islands():
    m = strip_mesh([0.1, 0.1, 0.1])
    part = partition_strips(m.grid, 1)
    src = identify_sources(m, m, 0.3, "static")
    rec, deferred = direct_target_identification(m, src[A], part, 0, A)
    assert not rec
    assert set(deferred) == {0, 1, 2}


# ---------------------------------------------------------------- chains


def _build(mesh_prev, mesh_next, alpha, mode, ranks, rng=None):
    net = net_for(mesh_next, ranks)
    return build_agglomeration(mesh_prev, mesh_next, alpha, mode, net, rng=rng)


def test_three_source_chain_single_rank_reduces_to_root():
    m = strip_mesh([0.1, 0.1, 0.1, 0.9])
    agg = _build(m, m, 0.3, "static", 1)
    assert {p.source: p.target for p in agg.pairs[A]} == {0: 3, 1: 3, 2: 3}
    assert all(p.level == 0 for p in agg.pairs[A])


def test_equidistant_routes_prefer_larger_final_target():
    m = strip_mesh([0.8, 0.1, 0.1, 0.1, 0.95])
    agg = _build(m, m, 0.3, "static", 1)
    assert agg.roots[A][2] == 4
    assert agg.roots[A][1] == 0
    assert agg.roots[A][3] == 4


def test_strip_chain_four_ranks_pairs_and_levels():
    """Cross-rank chain: level-reduced pairs stop at rank boundaries."""
    m = strip_mesh([0.01] * 7 + [0.95])
    agg = _build(m, m, 0.3, "static", 4)
    got = {p.source: p.target for p in agg.pairs[A]}
    assert got == {6: 7, 5: 6, 4: 6, 3: 4, 2: 4, 1: 2, 0: 2}
    levels = {p.source: p.level for p in agg.pairs[A]}
    assert levels == {0: 0, 1: 0, 2: 1, 3: 0, 4: 2, 5: 0, 6: 3}
    assert max(levels.values()) == 4 - 1  # rank count minus one
    assert agg.roots[A] == {s: 7 for s in range(7)}
    # round budget: chain length + rank count bounds the fixpoint loop
    assert agg.rounds[A] <= 4 + 6
    assert agg.rounds[A] == 7  # six productive rounds plus the quiet one


def test_strip_chain_single_rank_all_levels_zero():
    m = strip_mesh([0.01] * 7 + [0.95])
    agg = _build(m, m, 0.3, "static", 1)
    assert {p.source: p.target for p in agg.pairs[A]} == {s: 7 for s in range(7)}
    assert all(p.level == 0 for p in agg.pairs[A])


def test_canonical_map_rank_invariant_on_strip():
    m = strip_mesh([0.01] * 7 + [0.95])
    docs = {r: _build(m, m, 0.3, "static", r).to_canonical() for r in (1, 2, 4, 8)}
    assert docs[1] == docs[2] == docs[4] == docs[8]


def test_build_scheduling_independent():
    rng_fracs = np.random.default_rng(11)
    fr = np.clip(rng_fracs.random(24), 0.02, 0.98)
    m = strip_mesh(fr)
    base = _build(m, m, 0.35, "static", 4).to_canonical()
    for seed in (0, 1, 2):
        got = _build(m, m, 0.35, "static", 4,
                     rng=np.random.default_rng(seed)).to_canonical()
        assert got == base


def test_smooth_interface_alpha_zero_empty_map():
    m = strip_mesh([1.0, 0.7, 0.3, 0.0])
    agg = _build(m, m, 0.0, "static", 1)
    assert agg.pairs[A] == () and agg.pairs[B] == ()
    assert agg.roots[A] == {} and agg.anchors[A] == frozenset()


# ---------------------------------------------------------------- groups


def test_group_island_picks_biggest_fraction_root():
    m = strip_mesh([0.05, 0.08])
    agg = _build(m, m, 0.3, "static", 1)
    assert agg.anchors[A] == {1}
    assert {p.source: p.target for p in agg.pairs[A]} == {0: 1}
    assert agg.roots[A][0] == 1
    assert 0 in agg.groups[A][1]


def test_group_island_across_ranks_agrees_on_root():
    m = strip_mesh([0.07, 0.05, 0.06, 0.09])
    for ranks in (1, 2, 4):
        agg = _build(m, m, 0.3, "static", ranks)
        assert agg.anchors[A] == {3}
        assert all(root == 3 for root in agg.roots[A].values())
    # level bound still holds on the re-chained island
    agg = _build(m, m, 0.3, "static", 2)
    assert max(p.level for p in agg.pairs[A]) <= 1


def test_all_topological_island_raises():
    prev = strip_mesh([0.0, 0.0, 1.0, 1.0])
    nxt = mesh_from_fractions(prev.grid, np.array([0.2, 0.0, 1.0, 1.0]),
                              near_interface=np.array([True, True, False, False]))
    # newborn cell 0 has no A-cell neighbor at all: island of one newborn
    with pytest.raises(UnresolvableIslandError) as err:
        _build(prev, nxt, 0.3, "splitting", 1)
    assert err.value.species == A
    assert 0 in err.value.cells


# ---------------------------------------------------------------- levels


def test_determine_levels_direct_only_zero():
    g = build_grid(2, (4, 1), (0.0, 0.0), (4.0, 1.0))
    part = partition_strips(g, 2)
    levels = determine_levels({A: {1: 0, 2: 3}, B: {}}, part)
    assert levels == {A: {1: 0, 2: 0}, B: {}}


def test_determine_levels_feeding_chain():
    g = build_grid(2, (4, 1), (0.0, 0.0), (4.0, 1.0))
    part = partition_strips(g, 2)
    # 0 -> 1 -> 2 -> 3 stored without reduction
    levels = determine_levels({A: {0: 1, 1: 2, 2: 3}, B: {}}, part)
    assert levels[A] == {0: 0, 1: 1, 2: 2}


# ---------------------------------------------------------------- validation


def test_validate_map_passes_for_pipeline_output():
    m = strip_mesh([0.01] * 7 + [0.95])
    part = partition_strips(m.grid, 4)
    agg = _build(m, m, 0.3, "static", 4)
    src = identify_sources(m, m, 0.3, "static")
    assert validate_map(agg, m, m, part, src) == []


def test_validate_map_reports_cycle():
    m = strip_mesh([0.1, 0.1, 1.0])
    agg = _build(m, m, 0.3, "static", 1)
    cyc = dataclasses.replace(
        agg,
        pairs={A: (AggPair(0, 1, A, 0), AggPair(1, 0, A, 0)), B: ()},
        roots={A: {0: 1, 1: 0}, B: {}},
        groups={A: {}, B: {}},
        anchors={A: frozenset(), B: frozenset()},
    )
    bad = validate_map(cyc, m, m)
    assert any("cycle" in v for v in bad)


def test_validate_map_reports_dead_target():
    m = strip_mesh([0.1, 1.0])
    agg = _build(m, m, 0.3, "static", 1)
    dead = dataclasses.replace(
        agg,
        pairs={A: (AggPair(0, 1, A, 0),), B: (AggPair(0, 1, B, 0),)},
        roots={A: {0: 1}, B: {0: 1}},
        groups={A: {1: (0,)}, B: {1: (0,)}},
    )
    # cell 1 holds no B at all, so the B pair points at a dead target
    bad = validate_map(dead, m, m)
    assert any("does not exist" in v for v in bad)


def test_validate_map_reports_topological_target():
    prev = strip_mesh([1.0, 0.5, 0.0, 1.0])
    nxt = mesh_from_fractions(prev.grid, np.array([1.0, 0.5, 0.4, 1.0]),
                              near_interface=np.array([False, True, True, False]))
    src = identify_sources(prev, nxt, 0.45, "splitting")
    assert 2 in src[A].newborn
    forged = _build(prev, nxt, 0.45, "splitting", 1)
    hacked = dataclasses.replace(
        forged,
        pairs={A: (AggPair(1, 2, A, 0), AggPair(2, 3, A, 0)), B: forged.pairs[B]},
        roots={A: {1: 3, 2: 3}, B: forged.roots[B]},
    )
    bad = validate_map(hacked, prev, nxt, sources=src)
    assert any("topology-change" in v for v in bad)


def test_validate_map_reports_bad_level():
    m = strip_mesh([0.1, 0.1, 1.0])
    agg = _build(m, m, 0.3, "static", 1)
    wrong = dataclasses.replace(
        agg,
        pairs={A: tuple(dataclasses.replace(p, level=p.level + 1)
                        for p in agg.pairs[A]),
               B: agg.pairs[B]},
    )
    bad = validate_map(wrong, m, m)
    assert any("level" in v for v in bad)


def test_validate_map_flags_unmapped_sources():
    m = strip_mesh([0.1, 0.1, 1.0])
    agg = _build(m, m, 0.3, "static", 1)
    src = identify_sources(m, m, 0.3, "static")
    hollow = dataclasses.replace(
        agg, pairs={A: agg.pairs[A][:1], B: agg.pairs[B]},
        roots={A: {0: 2}, B: agg.roots[B]})
    bad = validate_map(hollow, m, m, sources=src)
    assert any("never mapped" in v for v in bad)


# ---------------------------------------------------------------- speed


def test_speed_check_static_mode_silent():
    prev = strip_mesh([1.0, 0.0, 0.0, 0.0])
    nxt = strip_mesh([0.0, 0.0, 0.0, 1.0])
    assert interface_speed_violations(prev, nxt, "static") == []


def test_speed_check_attached_newborn_ok():
    prev = strip_mesh([1.0, 1.0, 0.0, 0.0])
    nxt = strip_mesh([1.0, 1.0, 0.5, 0.0])
    assert interface_speed_violations(prev, nxt, "splitting") == []
    assert interface_speed_violations(prev, nxt, "moving") == []


def test_speed_check_isolated_newborn_flagged():
    prev = strip_mesh([1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    nxt = strip_mesh([1.0, 1.0, 0.0, 0.0, 0.0, 0.8])
    got = interface_speed_violations(prev, nxt, "splitting")
    assert ("newborn", A, 5) in got


def test_speed_check_newborn_region_attached_through_itself():
    # cells 2 and 3 both newborn; only 2 touches old territory, 3 rides along
    prev = strip_mesh([1.0, 1.0, 0.0, 0.0, 0.0])
    nxt = strip_mesh([1.0, 1.0, 0.6, 0.4, 0.0])
    assert interface_speed_violations(prev, nxt, "moving") == []


def test_speed_check_isolated_vanishing_flagged_moving_only():
    prev = strip_mesh([1.0, 1.0, 0.0, 0.0, 0.0, 0.4])
    nxt = strip_mesh([1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    assert ("vanishing", A, 5) in interface_speed_violations(prev, nxt, "moving")
    assert interface_speed_violations(prev, nxt, "splitting") == []


def test_speed_check_species_leaving_domain_exempt():
    prev = strip_mesh([1.0, 1.0, 1.0, 0.6])  # B only in cell 3
    nxt = strip_mesh([1.0, 1.0, 1.0, 1.0])   # B gone
    assert interface_speed_violations(prev, nxt, "moving") == []


def test_speed_check_near_interface_counts_as_occupied():
    prev = mesh_from_fractions(
        strip_mesh([1.0] * 3 + [0.0] * 3).grid,
        np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        near_interface=np.array([False, False, True, True, True, False]))
    nxt = strip_mesh([1.0, 1.0, 1.0, 0.0, 0.6, 0.0])
    # newborn 4 touches no positive-fraction cell, but the interface brushed
    # cells 3 and 4 at the previous step
    assert interface_speed_violations(prev, nxt, "moving") == []
