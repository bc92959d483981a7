"""Uniform Cartesian background grids, face topology, and rank partitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CartesianGrid",
    "Partition",
    "build_grid",
    "face_neighbors",
    "partition_strips",
]


@dataclass(frozen=True)
class CartesianGrid:
    """Axis-aligned uniform grid of box cells in 2 or 3 dimensions.

    Cells are numbered in C order (last axis fastest); the multi-index of
    cell ``i`` is ``np.unravel_index(i, shape)``.  Instances are immutable.
    """

    dim: int
    shape: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        for name in ("shape", "origin", "spacing"):
            if len(getattr(self, name)) != self.dim:
                raise ValueError(f"{name} needs {self.dim} entries")
        if any(int(n) < 1 for n in self.shape):
            raise ValueError("cells_per_axis must be positive")
        if any(h <= 0.0 for h in self.spacing):
            raise ValueError("spacing must be strictly positive")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    def multi_index(self, cell: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(cell, self.shape))

    def cell_index(self, multi) -> int:
        return int(np.ravel_multi_index(multi, self.shape))

    def multi_indices(self, cells=None) -> np.ndarray:
        """Multi-indices as an (n, dim) integer array."""
        if cells is None:
            cells = np.arange(self.n_cells)
        return np.stack(np.unravel_index(np.asarray(cells), self.shape), axis=-1)

    def cell_origins(self, cells=None) -> np.ndarray:
        """Lower corners of the requested cells, shape (n, dim)."""
        multi = self.multi_indices(cells)
        return np.asarray(self.origin) + multi * np.asarray(self.spacing)

    def cell_origin(self, cell: int) -> np.ndarray:
        return self.cell_origins(np.asarray([cell]))[0]

    def cell_center(self, cell: int) -> np.ndarray:
        return self.cell_origin(cell) + 0.5 * np.asarray(self.spacing)

    def cell_bounds(self, cell: int) -> tuple[np.ndarray, np.ndarray]:
        lo = self.cell_origin(cell)
        return lo, lo + np.asarray(self.spacing)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Cells containing the given physical points (boundary snaps inward)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - np.asarray(self.origin)) / np.asarray(self.spacing)
        multi = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.shape) - 1)
        return np.ravel_multi_index(tuple(multi.T), self.shape)

    def interior_faces(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """All interior faces normal to ``axis`` as (low cell, high cell) arrays.

        Ordered by the low cell's index; each face separates ``lo`` from its
        +1 neighbor along the axis.
        """
        multi = self.multi_indices()
        keep = multi[:, axis] < self.shape[axis] - 1
        lo = np.flatnonzero(keep)
        hi_multi = multi[keep].copy()
        hi_multi[:, axis] += 1
        hi = np.ravel_multi_index(tuple(hi_multi.T), self.shape)
        return lo, hi


def build_grid(dim: int, cells_per_axis, origin, extent) -> CartesianGrid:
    """Construct a grid covering ``origin + [0, extent]`` per axis.

    ``cells_per_axis`` may be a scalar (same count on every axis) or one
    count per axis.  Spacing is uniform per axis: extent / cells.
    """
    if np.isscalar(cells_per_axis):
        cells_per_axis = (int(cells_per_axis),) * dim
    shape = tuple(int(n) for n in cells_per_axis)
    origin = tuple(float(x) for x in origin)
    extent = tuple(float(x) for x in extent)
    if len(shape) != dim or len(origin) != dim or len(extent) != dim:
        raise ValueError("cells_per_axis, origin, extent must match dim")
    if any(n < 1 for n in shape):
        raise ValueError("cells_per_axis must be positive")
    if any(e <= 0 for e in extent):
        raise ValueError("extent must be strictly positive")
    spacing = tuple(e / n for e, n in zip(extent, shape))
    return CartesianGrid(dim=dim, shape=shape, origin=origin, spacing=spacing)


def face_neighbors(grid: CartesianGrid, cell: int) -> list[int]:
    """Face-adjacent cells of ``cell``, ordered by axis then -/+ direction.

    Out-of-domain neighbors are skipped, so corner cells return ``dim``
    entries and interior cells ``2 * dim``.
    """
    if not 0 <= cell < grid.n_cells:
        raise IndexError(f"cell {cell} outside grid with {grid.n_cells} cells")
    multi = grid.multi_index(cell)
    out = []
    for axis in range(grid.dim):
        for step in (-1, 1):
            k = multi[axis] + step
            if 0 <= k < grid.shape[axis]:
                nb = list(multi)
                nb[axis] = k
                out.append(grid.cell_index(tuple(nb)))
    return out


def _neighbor_table(grid: CartesianGrid) -> np.ndarray:
    """(n_cells, 2*dim) neighbor indices, -1 where the domain ends."""
    multi = grid.multi_indices()
    cols = []
    for axis in range(grid.dim):
        for step in (-1, 1):
            shifted = multi.copy()
            shifted[:, axis] += step
            ok = (shifted[:, axis] >= 0) & (shifted[:, axis] < grid.shape[axis])
            idx = np.full(grid.n_cells, -1, dtype=np.int64)
            idx[ok] = np.ravel_multi_index(tuple(shifted[ok].T), grid.shape)
            cols.append(idx)
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class Partition:
    """Disjoint ownership of grid cells by logical ranks plus ghost layers.

    ``owner[c]`` is the rank owning cell ``c``; ``ghost[r]`` holds the cells
    face-adjacent to rank ``r``'s territory but owned elsewhere (one layer).
    """

    grid: CartesianGrid
    rank_count: int
    owner: np.ndarray
    owned: tuple[np.ndarray, ...]
    ghost: tuple[frozenset, ...]

    def owned_set(self, rank: int) -> frozenset:
        return frozenset(int(c) for c in self.owned[rank])

    def local_cells(self, rank: int) -> frozenset:
        return self.owned_set(rank) | self.ghost[rank]

    def ghost_holders(self, cell: int) -> tuple[int, ...]:
        """Ranks that keep ``cell`` in their ghost layer."""
        return tuple(r for r in range(self.rank_count) if cell in self.ghost[r])


def _partition_from_owner(grid: CartesianGrid, owner: np.ndarray) -> Partition:
    rank_count = int(owner.max()) + 1
    nbr = _neighbor_table(grid)
    owned = tuple(np.flatnonzero(owner == r) for r in range(rank_count))
    ghosts = []
    for r in range(rank_count):
        adj = nbr[owned[r]]
        adj = adj[adj >= 0]
        ghosts.append(frozenset(int(c) for c in adj[owner[adj] != r]))
    return Partition(
        grid=grid,
        rank_count=rank_count,
        owner=owner,
        owned=owned,
        ghost=tuple(ghosts),
    )


def partition_strips(grid: CartesianGrid, rank_count: int, axis: int = 0) -> Partition:
    """Split the grid into contiguous slabs along ``axis``.

    Slab widths are as equal as possible (the first ``remainder`` ranks get
    one extra layer).  Every cell is owned by exactly one rank.
    """
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} invalid for dim {grid.dim}")
    n = grid.shape[axis]
    if rank_count < 1 or rank_count > n:
        raise ValueError(
            f"rank_count must be in [1, {n}] for axis {axis}, got {rank_count}"
        )
    base, rem = divmod(n, rank_count)
    layer_owner = np.repeat(
        np.arange(rank_count),
        [base + 1 if r < rem else base for r in range(rank_count)],
    )
    multi = grid.multi_indices()
    owner = layer_owner[multi[:, axis]].astype(np.int64)
    return _partition_from_owner(grid, owner)
