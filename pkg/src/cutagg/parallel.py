"""Simulated multi-rank execution over a grid partition.

All ranks live in one process; the network only moves values that a real
distributed run would move: ghost-cell data, pair records crossing rank
boundaries, and per-cell values such as forest levels.  Rank code must never
peek at another rank's private state, so algorithms exercised through this
module carry over to message-passing runtimes unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Partition

__all__ = ["RankNetwork", "run_rounds_to_fixpoint"]


class RankNetwork:
    """Routing fabric for one partition.

    Precomputes, per cell, the set of ranks that can see it (owner plus every
    rank holding it as a ghost).  Exchanges are synchronous: every rank
    contributes, every rank receives, and delivery order inside a round never
    leaks scheduling detail because receivers get content-sorted batches.
    """

    def __init__(self, partition: Partition, trace: bool = False):
        self.partition = partition
        self.trace = trace
        self.message_count = 0
        self.round_log: list = []
        seeing = {}
        for rank in range(partition.rank_count):
            for cell in partition.local_cells(rank):
                seeing.setdefault(int(cell), set()).add(rank)
        self._seeing = {c: frozenset(rs) for c, rs in seeing.items()}

    @property
    def rank_count(self) -> int:
        return self.partition.rank_count

    def owner(self, cell: int) -> int:
        return int(self.partition.owner[cell])

    def local_cells(self, rank: int) -> tuple:
        return tuple(sorted(self.partition.local_cells(rank)))

    def ranks_seeing(self, cell: int) -> frozenset:
        """Ranks holding the cell as owned or ghost."""
        return self._seeing.get(int(cell), frozenset())

    def _count(self, n: int):
        if self.trace:
            self.message_count += n

    def exchange_ghost_flags(self, values_by_rank: list) -> list:
        """Fill each rank's ghost layer from the owners' published values.

        ``values_by_rank[r]`` maps every cell owned by rank ``r`` to a value;
        the result maps each rank's owned and ghost cells to values.
        """
        part = self.partition
        for rank, vals in enumerate(values_by_rank):
            missing = part.owned_set(rank) - set(vals)
            if missing:
                raise ValueError(f"rank {rank} did not publish cells {sorted(missing)}")
        out = []
        for rank in range(part.rank_count):
            local = dict(values_by_rank[rank])
            for g in part.ghost[rank]:
                local[int(g)] = values_by_rank[self.owner(g)][int(g)]
            self._count(len(part.ghost[rank]))
            out.append(local)
        return out

    def exchange_boundary_pairs(self, records_by_rank: list, cells_of) -> list:
        """Deliver each record to every other rank that sees any of its cells.

        ``cells_of(record)`` returns the cell indices the record mentions.
        Received batches are deduplicated and sorted by their cell tuple, so
        inbox content is independent of emission order.
        """
        inboxes = [[] for _ in range(self.rank_count)]
        for rank, records in enumerate(records_by_rank):
            for rec in records:
                cells = tuple(int(c) for c in cells_of(rec) if c is not None)
                targets = set()
                for c in cells:
                    targets |= self.ranks_seeing(c)
                targets.discard(rank)
                for tgt in targets:
                    inboxes[tgt].append((cells, rec))
                self._count(len(targets))
        out = []
        for batch in inboxes:
            batch.sort(key=lambda item: item[0])
            seen, ordered = set(), []
            for cells, rec in batch:
                key = (cells, id(rec)) if not isinstance(rec, tuple) else (cells, rec)
                if key in seen:
                    continue
                seen.add(key)
                ordered.append(rec)
            out.append(ordered)
        return out

    def exchange_cell_values(self, values_by_rank: list, combine=max) -> list:
        """Push per-cell values to every rank seeing the cell.

        Each rank offers a dict ``cell -> value``; each receiving rank gets a
        dict over the cells it sees, with ``combine`` folding concurrent
        offers (default: maximum).
        """
        staged = [dict() for _ in range(self.rank_count)]
        for rank, vals in enumerate(values_by_rank):
            for cell, value in vals.items():
                cell = int(cell)
                for tgt in self.ranks_seeing(cell):
                    box = staged[tgt]
                    box[cell] = value if cell not in box else combine(box[cell], value)
                self._count(len(self.ranks_seeing(cell)))
        return staged

    def global_agree_max(self, candidates_by_rank: list):
        """Agree on one winner across ranks: greatest score, ties to the
        lowest cell index.  Candidates are ``(score, cell)`` or None; returns
        the winning tuple, or None when no rank offered one."""
        pool = [c for c in candidates_by_rank if c is not None]
        self._count(len(pool))
        if not pool:
            return None
        best = max(pool, key=lambda sc: (sc[0], -sc[1]))
        return (float(best[0]), int(best[1]))


def run_rounds_to_fixpoint(network: RankNetwork, round_fn, measure=None,
                           max_rounds: int = 10_000, rng=None) -> int:
    """Drive synchronized rounds until no rank changes and no message is in
    flight; returns the number of rounds executed (the final quiet round
    included).

    ``round_fn(rank, inbox) -> (changed, outbox)`` where outbox maps target
    ranks to message lists delivered at the start of the next round.  A
    ``measure`` callable returning a number that must never increase between
    rounds guards against livelock; regression raises RuntimeError.  Passing
    ``rng`` shuffles the per-round rank sweep, which must not affect results.
    """
    rank_count = network.rank_count
    inboxes: list = [[] for _ in range(rank_count)]
    prev_measure = measure() if measure is not None else None
    rounds = 0
    while True:
        if rounds >= max_rounds:
            raise RuntimeError(f"no fixpoint within {max_rounds} rounds")
        order = list(range(rank_count))
        if rng is not None:
            rng.shuffle(order)
        any_changed = False
        next_inboxes: list = [[] for _ in range(rank_count)]
        sent = 0
        for rank in order:
            changed, outbox = round_fn(rank, inboxes[rank])
            any_changed = any_changed or changed
            for tgt, msgs in outbox.items():
                next_inboxes[tgt].extend(msgs)
                sent += len(msgs)
        rounds += 1
        if network.trace:
            network.round_log.append({"round": rounds, "messages": sent,
                                      "changed": any_changed})
        if measure is not None:
            cur = measure()
            if cur > prev_measure:
                raise RuntimeError(
                    f"round measure regressed from {prev_measure} to {cur}")
            prev_measure = cur
        pending = any(len(b) > 0 for b in next_inboxes)
        inboxes = next_inboxes
        if not any_changed and not pending:
            return rounds
