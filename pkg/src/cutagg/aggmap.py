"""Agglomeration forests over cut-cell mesh pairs.

Per species, unhealthy cells (small cut shares, newborn, vanishing,
coinciding-empty) become *sources* that must hand their unknowns to a
healthy *target*.  Mapping proceeds in synchronized rounds: sources next to
a healthy non-source pair directly; the rest chain onto already-mapped
neighbors round by round; islands with no path to a healthy cell elect the
best member as a group root by global agreement.  Pair levels order the
forest so operators compose bottom-up.

Rounds are strict: a source may only attach to cells that were mapped
before the round started, and commits become visible one round later for
everyone, local or remote.  Attachment rounds therefore equal breadth-first
distance from the directly mapped frontier, which makes roots, and with
them the canonical source-to-final-target map, independent of how many
ranks execute the rounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cutcell import SPECIES, CutCellMesh, Species, detect_coinciding_fractions
from .grid import Partition, face_neighbors
from .parallel import RankNetwork, run_rounds_to_fixpoint

__all__ = [
    "MODES",
    "AggMap",
    "AggPair",
    "PairRecord",
    "SourceSets",
    "UnresolvableIslandError",
    "build_agglomeration",
    "determine_levels",
    "direct_target_identification",
    "identify_sources",
    "interface_speed_violations",
    "validate_map",
]

MODES = ("static", "splitting", "moving")


class UnresolvableIslandError(RuntimeError):
    """A connected set of sources with no admissible root or target."""

    def __init__(self, species: Species, cells):
        self.species = species
        self.cells = tuple(sorted(int(c) for c in cells))
        super().__init__(
            f"species {species.value}: sources {list(self.cells)} have no "
            f"path to an admissible target and no eligible group root"
        )


@dataclass(frozen=True)
class SourceSets:
    """Source filtration of one species: topology-change cells and small cells."""

    vanishing: frozenset
    newborn: frozenset
    small: frozenset

    @property
    def topological(self) -> frozenset:
        return self.vanishing | self.newborn

    @property
    def all_sources(self) -> frozenset:
        return self.vanishing | self.newborn | self.small


def identify_sources(mesh_prev: CutCellMesh, mesh_next: CutCellMesh, alpha: float,
                     mode: str) -> dict:
    """Classify every cell of each species as source or regular.

    static: only small cells (and coinciding empties) are sources.
    splitting: adds newborn cells (zero share before, positive after).
    moving: adds vanishing cells (positive before, zero after).

    Small means existing at the next step with a share below ``alpha`` at
    either step; coinciding-empty cells are small at every alpha.  The three
    categories are disjoint, topology wins over smallness.  A species whose
    mesh is empty at the next step has nothing to map into, so it
    contributes no sources at all.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    out = {}
    for sp in SPECIES:
        fp = mesh_prev.fractions(sp)
        fn = mesh_next.fractions(sp)
        coin_next = mesh_next.coinciding_empty(sp)
        exists_next = fn > 0.0
        for c in coin_next:
            exists_next[c] = True
        vanishing: set = set()
        newborn: set = set()
        if mode == "moving" and exists_next.any():
            vanishing = set(np.flatnonzero((fp > 0.0) & (fn == 0.0))) - coin_next
        if mode in ("splitting", "moving"):
            newborn = set(np.flatnonzero((fp == 0.0) & (fn > 0.0)))
        cand = set(np.flatnonzero(exists_next & ((fn < alpha) | ((fp > 0.0) & (fp < alpha)))))
        small = (cand | coin_next) - vanishing - newborn
        out[sp] = SourceSets(
            vanishing=frozenset(int(c) for c in vanishing),
            newborn=frozenset(int(c) for c in newborn),
            small=frozenset(int(c) for c in small),
        )
    return out


def _mask_components(grid, mask) -> list:
    """Face-connected components of the masked cells, each sorted."""
    todo = set(int(c) for c in np.flatnonzero(mask))
    comps = []
    while todo:
        seed = min(todo)
        comp = {seed}
        stack = [seed]
        todo.discard(seed)
        while stack:
            c = stack.pop()
            for v in face_neighbors(grid, c):
                if v in todo:
                    todo.discard(v)
                    comp.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def interface_speed_violations(mesh_prev: CutCellMesh, mesh_next: CutCellMesh,
                               mode: str) -> list:
    """Topology changes that outran the one-cell-per-step interface limit.

    Checked per connected region: every newborn region must touch territory
    the species occupied before the step, every vanishing region territory
    it still occupies after (unless the species left the domain entirely).
    A region out of nowhere means the interface skipped over cells.  Cells
    the interface provably touched count as occupied even when their share
    rounded to zero, so tangential sweeps and sub-quadrature slivers do not
    raise false alarms.  Returns (kind, species, lowest cell of the region);
    empty means admissible.
    """
    out = []
    if mode == "static":
        return out
    grid = mesh_prev.grid
    for sp in SPECIES:
        fp = mesh_prev.fractions(sp)
        fn = mesh_next.fractions(sp)
        occ_prev = (fp > 0.0) | mesh_prev.near_interface
        occ_next = mesh_next.exists_mask(sp) | mesh_next.near_interface
        for comp in _mask_components(grid, (fp == 0.0) & (fn > 0.0)):
            seen = any(occ_prev[u] for u in comp) or any(
                occ_prev[v] for u in comp for v in face_neighbors(grid, u))
            if not seen:
                out.append(("newborn", sp, comp[0]))
        if mode == "moving" and mesh_next.exists_mask(sp).any():
            for comp in _mask_components(grid, (fp > 0.0) & (fn == 0.0)):
                seen = any(occ_next[u] for u in comp) or any(
                    occ_next[v] for u in comp for v in face_neighbors(grid, u))
                if not seen:
                    out.append(("vanishing", sp, comp[0]))
    return sorted(out)


@dataclass(frozen=True)
class PairRecord:
    """One mapped source: its literal pair target and final-root bookkeeping.

    ``target`` is None exactly for group roots, which stay unagglomerated and
    terminate their group's chains.  ``route_len`` counts hops to ``root``.
    """

    source: int
    species: Species
    target: int | None
    root: int
    route_len: int
    root_frac: float
    topological: bool


def direct_target_identification(mesh_next: CutCellMesh, sources: SourceSets,
                                 partition: Partition, rank: int,
                                 species: Species):
    """Round zero: pair owned sources with their best healthy neighbor.

    Healthy means a positive-share non-source at the next step; the greatest
    share wins, ties fall to the lowest cell index.  Returns the new records
    plus the owned sources deferred to chain formation.
    """
    grid = partition.grid
    fn = mesh_next.fractions(species)
    srcs = sources.all_sources
    topo = sources.topological
    records = {}
    deferred = set()
    for u in sorted(srcs):
        if partition.owner[u] != rank:
            continue
        best = None
        for v in face_neighbors(grid, u):
            if v in srcs or fn[v] <= 0.0:
                continue
            key = (-fn[v], v)
            if best is None or key < best[0]:
                best = (key, v)
        if best is None:
            deferred.add(u)
        else:
            v = best[1]
            records[u] = PairRecord(
                source=u, species=species, target=int(v), root=int(v),
                route_len=1, root_frac=float(fn[v]), topological=u in topo,
            )
    return records, deferred


class _RankState:
    """Per-rank mapping state for one species."""

    __slots__ = ("known", "unmapped")

    def __init__(self, known, unmapped):
        self.known = known
        self.unmapped = unmapped


def _record_receivers(network, rec, rank):
    receivers = set(network.ranks_seeing(rec.source))
    if rec.target is not None:
        receivers |= network.ranks_seeing(rec.target)
    receivers.discard(rank)
    return receivers


def _chain_rounds(states, network: RankNetwork, species: Species, topo, rng) -> int:
    """Attach unmapped sources to round-start-mapped neighbors until quiet.

    Candidate weight is (hops to root, -root share, root index, neighbor
    index), minimized.  When the chosen neighbor's own pair target is visible
    from this rank (owned or ghost) the attachment adopts that target, which
    keeps the chain flat; otherwise it pairs with the neighbor itself and the
    pair crosses the rank boundary.  Topology-change neighbors are the one
    exception: they may carry a chain but can never be pair targets, so an
    attachment through one always adopts the neighbor's target even when that
    target is not locally visible.
    """
    grid = network.partition.grid

    def unmapped_total():
        return sum(len(st.unmapped) for st in states)

    def round_fn(rank, inbox):
        st = states[rank]
        for rec in inbox:
            st.known.setdefault(rec.source, rec)
        new = []
        for u in sorted(st.unmapped):
            best = None
            for v in face_neighbors(grid, u):
                rec_v = st.known.get(v)
                if rec_v is None:
                    continue
                if rec_v.topological and rec_v.target is None:
                    continue
                weight = (rec_v.route_len + 1, -rec_v.root_frac, rec_v.root, v)
                if best is None or weight < best[0]:
                    best = (weight, v, rec_v)
            if best is None:
                continue
            _, v, rec_v = best
            if rec_v.target is None:
                tgt = v
            elif rec_v.topological or rank in network.ranks_seeing(rec_v.target):
                tgt = rec_v.target
            else:
                tgt = v
            new.append(PairRecord(
                source=u, species=species, target=int(tgt), root=rec_v.root,
                route_len=rec_v.route_len + 1, root_frac=rec_v.root_frac,
                topological=u in topo,
            ))
        outbox: dict = {}
        for rec in new:
            st.known[rec.source] = rec
            st.unmapped.discard(rec.source)
            for t in _record_receivers(network, rec, rank):
                outbox.setdefault(t, []).append(rec)
        return bool(new), outbox

    return run_rounds_to_fixpoint(network, round_fn, measure=unmapped_total, rng=rng)


def _species_records(mesh_next: CutCellMesh, sources: SourceSets,
                     network: RankNetwork, species: Species, rng):
    """Run direct, chain, and group phases; returns (records, chain rounds)."""
    part = network.partition
    fn = mesh_next.fractions(species)
    topo = sources.topological
    if not sources.all_sources:
        return {}, 0

    states = []
    round0 = []
    for rank in range(network.rank_count):
        recs, deferred = direct_target_identification(mesh_next, sources, part,
                                                      rank, species)
        states.append(_RankState(dict(recs), set(deferred)))
        round0.append(sorted(recs.values(), key=lambda r: r.source))
    delivered = network.exchange_boundary_pairs(
        round0, cells_of=lambda r: (r.source, r.target))
    for rank, batch in enumerate(delivered):
        for rec in batch:
            states[rank].known.setdefault(rec.source, rec)

    rounds = _chain_rounds(states, network, species, topo, rng)

    while True:
        remaining = set()
        for st in states:
            remaining |= st.unmapped
        if not remaining:
            break
        candidates = []
        for rank in range(network.rank_count):
            eligible = [u for u in states[rank].unmapped if u not in topo]
            if eligible:
                best = max(eligible, key=lambda u: (fn[u], -u))
                candidates.append((float(fn[best]), int(best)))
            else:
                candidates.append(None)
        winner = network.global_agree_max(candidates)
        if winner is None:
            raise UnresolvableIslandError(species, remaining)
        root = winner[1]
        seed = PairRecord(source=root, species=species, target=None, root=root,
                          route_len=0, root_frac=float(fn[root]),
                          topological=False)
        # agreement already made the winner global knowledge on every rank
        for st in states:
            st.known.setdefault(root, seed)
        states[part.owner[root]].unmapped.discard(root)
        rounds += _chain_rounds(states, network, species, topo, rng)

    records: dict = {}
    for rank in range(network.rank_count):
        for cell in part.owned[rank]:
            rec = states[rank].known.get(int(cell))
            if rec is not None:
                records[rec.source] = rec
    return records, rounds


def determine_levels(targets_by_species: dict, partition: Partition,
                     network: RankNetwork | None = None) -> dict:
    """Forest level of every pair: 0 for pairs nothing points at, otherwise
    one more than the highest incoming level.

    ``targets_by_species`` maps species to {source: target}.  Levels are
    computed where the source lives and pushed to every rank seeing the pair,
    so each rank resolves its own pairs from leaves upward.
    """
    net = network if network is not None else RankNetwork(partition)
    rank_count = net.rank_count

    flat = []
    for sp in SPECIES:
        for s, t in sorted(targets_by_species.get(sp, {}).items()):
            flat.append((sp, int(s), int(t)))
    by_rank = [[p for p in flat if partition.owner[p[1]] == rank]
               for rank in range(rank_count)]
    received = net.exchange_boundary_pairs(
        by_rank, cells_of=lambda p: (p[1], p[2]))

    own_pairs = by_rank
    incoming = []
    levels = []
    for rank in range(rank_count):
        inc: dict = {}
        for sp, s, t in own_pairs[rank] + received[rank]:
            inc.setdefault((sp, t), set()).add(s)
        incoming.append(inc)
        levels.append({})

    def unknown_total():
        return sum(len(own_pairs[r]) - len(levels[r]) for r in range(rank_count))

    def round_fn(rank, inbox):
        lv = levels[rank]
        for key, value in inbox:
            lv.setdefault(key, value)
        changed = False
        outbox: dict = {}
        for sp, s, t in own_pairs[rank]:
            key = (sp, s)
            if key in lv:
                continue
            feeders = incoming[rank].get(key, set())
            feeder_levels = []
            ready = True
            for w in feeders:
                wkey = (sp, w)
                if wkey in lv:
                    feeder_levels.append(lv[wkey])
                else:
                    ready = False
                    break
            if not ready:
                continue
            lv[key] = 1 + max(feeder_levels) if feeder_levels else 0
            changed = True
            receivers = set(net.ranks_seeing(s)) | set(net.ranks_seeing(t))
            receivers.discard(rank)
            for tgt in receivers:
                outbox.setdefault(tgt, []).append((key, lv[key]))
        return changed, outbox

    run_rounds_to_fixpoint(net, round_fn, measure=unknown_total)

    out = {sp: {} for sp in SPECIES}
    for rank in range(rank_count):
        for sp, s, _t in own_pairs[rank]:
            out[sp][s] = levels[rank][(sp, s)]
    return out


@dataclass(frozen=True)
class AggPair:
    source: int
    target: int
    species: Species
    level: int


@dataclass(frozen=True)
class AggMap:
    """Finished forest: pairs with levels, final roots, and group membership.

    ``pairs[sp]`` is sorted by source; ``roots[sp]`` sends each source to the
    cell that finally absorbs it; ``groups[sp]`` lists, per root, every source
    absorbed into it.  ``rounds[sp]`` counts the chain rounds spent.
    """

    alpha: float
    mode: str
    pairs: dict
    roots: dict
    groups: dict
    anchors: dict
    rounds: dict

    def sources(self, species: Species) -> tuple:
        return tuple(p.source for p in self.pairs[species])

    def pair_map(self, species: Species) -> dict:
        return {p.source: p for p in self.pairs[species]}

    def to_canonical(self) -> dict:
        doc: dict = {"alpha": self.alpha, "mode": self.mode, "species": {}}
        for sp in SPECIES:
            doc["species"][sp.value] = {
                str(src): int(root) for src, root in sorted(self.roots[sp].items())
            }
        return doc

    def to_json(self, canonical: bool = True, species=None) -> str:
        if canonical and species is None:
            return json.dumps(self.to_canonical(), indent=1, sort_keys=True)
        picked = SPECIES if species is None else (species,)
        if canonical:
            doc = self.to_canonical()
            doc["species"] = {sp.value: doc["species"][sp.value] for sp in picked}
            return json.dumps(doc, indent=1, sort_keys=True)
        doc = {"alpha": self.alpha, "mode": self.mode, "species": {}}
        for sp in picked:
            doc["species"][sp.value] = {
                "pairs": [
                    {"source": p.source, "target": p.target, "level": p.level}
                    for p in self.pairs[sp]
                ],
                "groups": {
                    str(r): [int(m) for m in members]
                    for r, members in sorted(self.groups[sp].items())
                },
                "rounds": self.rounds[sp],
            }
        return json.dumps(doc, indent=1, sort_keys=True)

    def to_dot(self, species=None) -> str:
        """Graphviz rendering: one cluster per species, edges labeled by level."""
        lines = ["digraph agglomeration {", "  rankdir=LR;"]
        for sp in (SPECIES if species is None else (species,)):
            lines.append(f"  subgraph cluster_{sp.value} {{")
            lines.append(f'    label="species {sp.value}";')
            cells = sorted({p.source for p in self.pairs[sp]}
                           | {p.target for p in self.pairs[sp]})
            for c in cells:
                lines.append(f'    {sp.value}{c} [label="{c}"];')
            for p in self.pairs[sp]:
                lines.append(
                    f'    {sp.value}{p.source} -> {sp.value}{p.target} '
                    f'[label="{p.level}"];')
            lines.append("  }")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_agglomeration(mesh_prev: CutCellMesh, mesh_next: CutCellMesh,
                        alpha: float, mode: str, network: RankNetwork,
                        rng=None) -> AggMap:
    """Full pipeline: filter sources, pair, chain, group, level, package."""
    if mesh_prev.grid is not mesh_next.grid and mesh_prev.grid != mesh_next.grid:
        raise ValueError("mesh pair must share one grid")
    sources = identify_sources(mesh_prev, mesh_next, alpha, mode)
    records = {}
    rounds = {}
    for sp in SPECIES:
        records[sp], rounds[sp] = _species_records(
            mesh_next, sources[sp], network, sp, rng)
    targets = {
        sp: {s: r.target for s, r in records[sp].items() if r.target is not None}
        for sp in SPECIES
    }
    levels = determine_levels(targets, network.partition, network)
    pairs = {}
    roots = {}
    groups = {}
    anchors = {}
    for sp in SPECIES:
        plist = [
            AggPair(source=s, target=r.target, species=sp, level=levels[sp][s])
            for s, r in sorted(records[sp].items()) if r.target is not None
        ]
        pairs[sp] = tuple(plist)
        roots[sp] = {s: int(r.root) for s, r in sorted(records[sp].items())
                     if r.target is not None}
        anchors[sp] = frozenset(int(s) for s, r in records[sp].items()
                                if r.target is None)
        grp: dict = {}
        for s, r in sorted(records[sp].items()):
            if r.target is None:
                grp.setdefault(int(r.root), [])
                continue
            grp.setdefault(int(r.root), []).append(int(s))
        groups[sp] = {root: tuple(sorted(members)) for root, members in grp.items()}
    return AggMap(alpha=float(alpha), mode=mode, pairs=pairs, roots=roots,
                  groups=groups, anchors=anchors, rounds=rounds)


def _follow_root(pair_map: dict, src: int):
    """Terminal cell of a source's target chain, or None on a cycle."""
    seen = {src}
    cur = pair_map[src].target
    while cur in pair_map:
        if cur in seen:
            return None
        seen.add(cur)
        cur = pair_map[cur].target
    return cur


def validate_map(agg: AggMap, mesh_prev: CutCellMesh, mesh_next: CutCellMesh,
                 partition: Partition | None = None,
                 sources: dict | None = None) -> list:
    """Structural audit of a finished map; returns human-readable violations.

    Checks: acyclic chains terminating at the recorded root, targets alive at
    the next step and never topology-change cells, groups face-connected,
    levels consistent with incoming pairs, and every coinciding-empty cell
    mapped.  With ``sources`` given, also checks the mapped set matches the
    filtration exactly (group roots excepted).
    """
    grid = mesh_next.grid
    bad = []
    coin = detect_coinciding_fractions(mesh_next)
    for sp in SPECIES:
        pm = agg.pair_map(sp)
        exists = mesh_next.exists_mask(sp)
        for src, pair in pm.items():
            root = _follow_root(pm, src)
            if root is None:
                bad.append(f"{sp.value}: cycle through source {src}")
                continue
            if root != agg.roots[sp].get(src):
                bad.append(f"{sp.value}: source {src} chain ends at {root}, "
                           f"recorded root {agg.roots[sp].get(src)}")
            if not exists[pair.target]:
                bad.append(f"{sp.value}: target {pair.target} of source {src} "
                           f"does not exist at the next step")
        incoming: dict = {}
        for src, pair in pm.items():
            incoming.setdefault(pair.target, []).append(src)
        for src, pair in pm.items():
            feeders = incoming.get(src, [])
            want = 1 + max(pm[w].level for w in feeders) if feeders else 0
            if pair.level != want:
                bad.append(f"{sp.value}: pair ({src} -> {pair.target}) level "
                           f"{pair.level}, expected {want}")
        for root, members in agg.groups[sp].items():
            blob = set(members) | {root}
            todo = [root]
            reached = {root}
            while todo:
                c = todo.pop()
                for v in face_neighbors(grid, c):
                    if v in blob and v not in reached:
                        reached.add(v)
                        todo.append(v)
            if reached != blob:
                stranded = sorted(blob - reached)
                bad.append(f"{sp.value}: group rooted at {root} is not "
                           f"face-connected, stranded {stranded}")
        if sources is not None:
            ss = sources[sp]
            mapped = set(pm)
            missing = ss.all_sources - mapped - agg.anchors[sp]
            if missing and exists.any():
                bad.append(f"{sp.value}: sources never mapped: {sorted(missing)}")
            extra = mapped - ss.all_sources
            if extra:
                bad.append(f"{sp.value}: mapped cells that are not sources: "
                           f"{sorted(extra)}")
            for src, pair in pm.items():
                if pair.target in ss.topological:
                    bad.append(f"{sp.value}: topology-change cell {pair.target} "
                               f"used as target of {src}")
    for cell, sp in sorted(coin, key=lambda cs: (cs[1].value, cs[0])):
        pm = agg.pair_map(sp)
        if cell not in pm and cell not in agg.groups[sp]:
            bad.append(f"{sp.value}: coinciding-empty cell {cell} left unmapped")
    return bad
