"""Modal tensor bases, phase mass matrices, and injection operators.

Each cell carries an orthonormal tensor-product basis of shifted Legendre
polynomials on the reference cube [0,1]^dim.  Phase mass matrices integrate
mode products over one species' part of a cell, in reference measure.
Coupling matrices re-expand a neighbor cell's modes polynomially, which is
exact at degree p, so operator composition along agglomeration chains loses
nothing.  The injection operator maps coefficients of the agglomerated
space (one block per kept cell) onto the full cut-cell space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as _leg

from .aggmap import AggMap
from .cutcell import CutCellMesh, QuadratureRule, Species, phase_region_boxes
from .grid import CartesianGrid

__all__ = [
    "InjectionOperator",
    "TensorBasis",
    "agglomerate_mass",
    "assemble_injection",
    "cell_offset",
    "coupling_cells",
    "coupling_matrix",
    "inject",
    "phase_mass_matrix",
    "project_reference",
    "restrict",
    "species_mass_blocks",
    "tensor_basis",
]


def gauss_01(n: int):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = _leg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _modes_1d(degree: int, xi: np.ndarray) -> np.ndarray:
    """Orthonormal shifted Legendre values: column n is sqrt(2n+1) P_n(2x-1)."""
    vand = _leg.legvander(2.0 * np.asarray(xi) - 1.0, degree)
    return vand * np.sqrt(2.0 * np.arange(degree + 1) + 1.0)


@dataclass(frozen=True)
class TensorBasis:
    """Tensor modes ordered by total degree, then lexicographic exponent."""

    dim: int
    degree: int
    modes: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Mode values at reference points; shape (n_points, n_modes)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        per_axis = [_modes_1d(self.degree, pts[:, a]) for a in range(self.dim)]
        out = np.ones((pts.shape[0], self.n_modes))
        for a in range(self.dim):
            out *= per_axis[a][:, self.modes[:, a]]
        return out


def tensor_basis(dim: int, degree: int) -> TensorBasis:
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2, or 3")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    grids = np.meshgrid(*[np.arange(degree + 1)] * dim, indexing="ij")
    tuples = np.stack([g.ravel() for g in grids], axis=1)
    order = sorted(range(tuples.shape[0]),
                   key=lambda i: (int(tuples[i].sum()), tuple(tuples[i])))
    return TensorBasis(dim=dim, degree=degree, modes=tuples[order])


def phase_mass_matrix(basis: TensorBasis, origins, sizes, weights,
                      gauss_order: int | None = None) -> np.ndarray:
    """Mass matrix over a weighted box cover of a phase region.

    Boxes live in reference-cell coordinates (see phase_region_boxes); the
    result is the reference-measure integral of mode products, exact per box
    for the default Gauss order degree+1.  Assembly is batched over boxes.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    sizes = np.asarray(sizes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    M = basis.n_modes
    n = origins.shape[0]
    if n == 0:
        return np.zeros((M, M))
    q = max(basis.degree + 1, gauss_order or 0)
    x, w = gauss_01(q)
    rows = basis.modes[:, None, :]
    cols = basis.modes[None, :, :]
    prod = np.ones((n, M, M))
    for a in range(basis.dim):
        xi = origins[:, a][:, None] + sizes[:, None] * x[None, :]
        vals = _modes_1d(basis.degree, xi.ravel()).reshape(n, q, -1)
        wq = sizes[:, None] * w[None, :]
        gram = np.einsum("nq,nqi,nqj->nij", wq, vals, vals)
        prod *= gram[:, rows[:, :, a], cols[:, :, a]]
    return np.einsum("n,nij->ij", weights, prod)


def species_mass_blocks(mesh: CutCellMesh, field, rule: QuadratureRule,
                        basis: TensorBasis, species: Species,
                        cells=None) -> dict:
    """Per-cell phase mass matrices for the species' cells of a mesh.

    Full cells short-circuit to the identity (orthonormal basis), empty and
    coinciding-empty cells to zero.
    """
    grid = mesh.grid
    if cells is None:
        cells = mesh.phase_cells(species)
    frac = mesh.fractions(species)
    M = basis.n_modes
    out = {}
    for c in cells:
        c = int(c)
        if frac[c] == 1.0:
            out[c] = np.eye(M)
        elif frac[c] == 0.0:
            out[c] = np.zeros((M, M))
        else:
            boxes = phase_region_boxes(grid, field, c, mesh.time, rule, species)
            out[c] = phase_mass_matrix(basis, *boxes, gauss_order=rule.gauss_order)
    return out


def coupling_matrix(basis: TensorBasis, delta) -> np.ndarray:
    """Re-expansion of modes shifted by ``delta`` reference cells.

    Entry (m, n) integrates mode m against mode n of the cell displaced by
    ``delta``, i.e. phi_n evaluated at xi + delta.  Exact for Gauss order
    degree+1 since the shifted mode is still a polynomial of degree p.
    """
    delta = np.asarray(delta, dtype=float)
    q = basis.degree + 1
    x, w = gauss_01(q)
    tables = []
    for a in range(basis.dim):
        own = _modes_1d(basis.degree, x)
        other = _modes_1d(basis.degree, x + delta[a])
        tables.append((own * w[:, None]).T @ other)
    M = basis.n_modes
    out = np.ones((M, M))
    for a in range(basis.dim):
        out *= tables[a][basis.modes[:, None, a], basis.modes[None, :, a]]
    return out


def cell_offset(grid: CartesianGrid, src: int, tgt: int) -> np.ndarray:
    """Integer offset of src relative to tgt in cell units."""
    return (np.asarray(grid.multi_index(src)) - np.asarray(grid.multi_index(tgt))).astype(float)


def coupling_cells(basis: TensorBasis, grid: CartesianGrid, src: int,
                   tgt: int) -> np.ndarray:
    """Expansion of tgt's modes in src's local basis (exact restriction)."""
    return coupling_matrix(basis, cell_offset(grid, src, tgt))


@dataclass(frozen=True)
class InjectionOperator:
    """Block map from agglomerated coefficients to per-cell coefficients.

    ``cells`` spans the species mesh (rows), ``kept`` the unagglomerated
    cells (columns).  Kept cells carry identity blocks; every mapped source
    ``x`` carries ``blocks[x]``, its expansion of the root's modes, at column
    ``roots[x]``.
    """

    species: Species
    basis: TensorBasis
    cells: tuple
    kept: tuple
    roots: dict
    blocks: dict

    def apply(self, coarse: dict) -> dict:
        out = {}
        for c in self.kept:
            out[c] = np.asarray(coarse[c], dtype=float).copy()
        for x, block in self.blocks.items():
            out[x] = block @ np.asarray(coarse[self.roots[x]], dtype=float)
        return out

    def to_dense(self) -> np.ndarray:
        M = self.basis.n_modes
        row_at = {c: i for i, c in enumerate(self.cells)}
        col_at = {c: j for j, c in enumerate(self.kept)}
        out = np.zeros((len(self.cells) * M, len(self.kept) * M))
        for c in self.kept:
            i, j = row_at[c], col_at[c]
            out[i * M:(i + 1) * M, j * M:(j + 1) * M] = np.eye(M)
        for x, block in self.blocks.items():
            i, j = row_at[x], col_at[self.roots[x]]
            out[i * M:(i + 1) * M, j * M:(j + 1) * M] = block
        return out


def assemble_injection(agg: AggMap, basis: TensorBasis, grid: CartesianGrid,
                       mesh_next: CutCellMesh, species: Species) -> InjectionOperator:
    """Compose pair couplings into source-to-root blocks, pairs in level order.

    Every source starts as an identity holder on itself; processing pairs by
    ascending level multiplies each holder that currently terminates at the
    pair's source with that pair's coupling, so chains fold onto their roots
    without ever needing a root-distance precomputation.

    Vanished sources (mapped, but absent from the next-step mesh) carry no
    next-step unknowns, so their pairs are transfer bookkeeping only and do
    not enter the operator.  Targets always exist at the next step, hence
    the surviving sub-forest stays closed under composition.
    """
    cells = tuple(int(c) for c in mesh_next.phase_cells(species))
    cell_set = set(cells)
    pm = {s: p for s, p in agg.pair_map(species).items() if s in cell_set}
    kept = tuple(c for c in cells if c not in pm)
    holders = {s: np.eye(basis.n_modes) for s in pm}
    term = {s: s for s in pm}
    for pair in sorted(agg.pairs[species], key=lambda p: (p.level, p.source)):
        if pair.source not in pm:
            continue
        step = coupling_cells(basis, grid, pair.source, pair.target)
        for x in [x for x, t in term.items() if t == pair.source]:
            holders[x] = holders[x] @ step
            term[x] = pair.target
    for x, t in term.items():
        if t != agg.roots[species][x]:
            raise ValueError(f"chain of source {x} folded onto {t}, expected "
                             f"root {agg.roots[species][x]}")
    return InjectionOperator(species=species, basis=basis, cells=cells,
                             kept=kept, roots=dict(agg.roots[species]),
                             blocks=holders)


def agglomerate_mass(injection: InjectionOperator, mass: dict) -> dict:
    """Mass matrices of the agglomerated space: one block per kept cell.

    The operator's block structure keeps the product block-diagonal, block
    (R,R) summing member contributions C^T M C over the group of R.
    """
    out = {c: np.asarray(mass[c], dtype=float).copy() for c in injection.kept}
    for x, block in injection.blocks.items():
        root = injection.roots[x]
        out[root] += block.T @ np.asarray(mass[x], dtype=float) @ block
    return out


def inject(injection: InjectionOperator, coarse: dict) -> dict:
    """Coefficients on every species cell from agglomerated coefficients."""
    return injection.apply(coarse)


def restrict(injection: InjectionOperator, mass: dict, fine: dict) -> dict:
    """Mass-weighted projection onto the agglomerated space.

    Solves, per kept cell, the block of (Q^T M Q) c = Q^T M f.  A singular
    agglomerate (zero-measure group) is an error, not a silent zero.
    """
    agg_mass = agglomerate_mass(injection, mass)
    rhs = {c: np.asarray(mass[c], dtype=float) @ np.asarray(fine[c], dtype=float)
           for c in injection.kept}
    for x, block in injection.blocks.items():
        root = injection.roots[x]
        rhs[root] = rhs[root] + block.T @ (
            np.asarray(mass[x], dtype=float) @ np.asarray(fine[x], dtype=float))
    out = {}
    for c in injection.kept:
        try:
            out[c] = np.linalg.solve(agg_mass[c], rhs[c])
        except np.linalg.LinAlgError as err:
            raise ValueError(
                f"agglomerate kept at cell {c} has a singular mass matrix"
            ) from err
    return out


def project_reference(basis: TensorBasis, fn, gauss_order: int | None = None) -> np.ndarray:
    """Coefficients of a function on the reference cell (orthonormal basis)."""
    q = max(basis.degree + 1, gauss_order or 0)
    x, w = gauss_01(q)
    axes = [x] * basis.dim
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wg = np.ones(pts.shape[0])
    for a in range(basis.dim):
        wgrid = np.meshgrid(*[w] * basis.dim, indexing="ij")[a].ravel()
        wg *= wgrid
    vals = np.asarray(fn(pts), dtype=float)
    return (basis.eval(pts) * (vals * wg)[:, None]).sum(axis=0)
