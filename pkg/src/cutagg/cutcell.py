"""Cut-cell meshes: volume fractions, cut flags, coinciding interfaces.

Fractions come from a recursive bisection of each cell.  A box whose corner
and center samples agree in sign counts as pure; mixed boxes split until
``max_depth``, where a fixed 3^dim probe lattice decides the leftover share.
All bookkeeping is integer counting (see ``cutagg.kernels``), so fractions
are exact dyadic/ternary rationals independent of kernel lane, partition,
or evaluation order.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .geometry import LevelSetField
from .grid import CartesianGrid

__all__ = [
    "COINCIDING_TOL",
    "CoincidingFace",
    "CutCellMesh",
    "QuadratureRule",
    "Species",
    "assign_coinciding_interface",
    "build_cutcell_mesh",
    "cell_fraction",
    "detect_coinciding_fractions",
    "mesh_from_fractions",
    "mesh_to_json",
]

# Face probes must sit exactly on the interface for a face to coincide with
# it; this threshold is absolute, not scaled by cell size.
COINCIDING_TOL = 1e-12


class Species(enum.Enum):
    """The two bulk phases: A fills psi < 0, B fills psi > 0."""

    A = "A"
    B = "B"

    def __lt__(self, other):
        if isinstance(other, Species):
            return self.value < other.value
        return NotImplemented


SPECIES = (Species.A, Species.B)


@dataclass(frozen=True)
class QuadratureRule:
    """Subdivision depth for fractions and Gauss order for moment integrals."""

    max_depth: int = 4
    gauss_order: int = 2

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        if self.gauss_order < 1:
            raise ValueError("gauss_order must be at least 1")


def _offsets(dim: int, fracs) -> np.ndarray:
    return np.array(list(itertools.product(fracs, repeat=dim)), dtype=float)


_DECISION = {
    d: np.vstack([_offsets(d, (0.0, 1.0)), np.full((1, d), 0.5)]) for d in (1, 2, 3)
}
_PROBES = {d: _offsets(d, (1.0 / 6.0, 0.5, 5.0 / 6.0)) for d in (1, 2, 3)}
_CHILDREN = {d: _offsets(d, (0.0, 1.0)) for d in (1, 2, 3)}


def _eval_field(field, pts, t, rows):
    vals = np.asarray(field.values(pts, t), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("level-set field returned a non-finite value")
    return np.ascontiguousarray(vals.reshape(rows, -1))


def _fraction_numerators(grid, field, t, rule, cells):
    """Integer numerators of frac_A per cell; denominator is 3^dim 2^(dim D).

    Also reports which cells had a mixed-sign decision stencil at depth 0:
    the interface provably passes through those cells even when their phase
    share rounds to an exact 0 or 1.
    """
    dim = grid.dim
    depth_max = rule.max_depth
    n = len(cells)
    probes_per_box = 3**dim
    num = np.zeros(n, dtype=np.int64)
    mixed0 = np.zeros(n, dtype=bool)
    spacing = np.asarray(grid.spacing)
    box_org = grid.cell_origins(cells)
    box_pos = np.arange(n, dtype=np.int64)
    for depth in range(depth_max + 1):
        if box_org.shape[0] == 0:
            break
        size = spacing / float(2**depth)
        pts = (box_org[:, None, :] + _DECISION[dim] * size).reshape(-1, dim)
        vals = _eval_field(field, pts, t, box_org.shape[0])
        codes = kernels.classify(vals)
        amount = probes_per_box * 2 ** (dim * (depth_max - depth))
        kernels.accumulate_pure(codes, box_pos, amount, num)
        mixed = codes == 2
        if depth == 0:
            mixed0[box_pos[mixed]] = True
        if not mixed.any():
            break
        if depth == depth_max:
            m_org = box_org[mixed]
            m_pos = np.ascontiguousarray(box_pos[mixed])
            pts = (m_org[:, None, :] + _PROBES[dim] * size).reshape(-1, dim)
            vals = _eval_field(field, pts, t, m_org.shape[0])
            kernels.accumulate_counts(m_pos, kernels.negatives(vals), num)
        else:
            box_org = (box_org[mixed][:, None, :] + _CHILDREN[dim] * (size / 2.0)).reshape(
                -1, dim
            )
            box_pos = np.repeat(box_pos[mixed], 2**dim)
    denom = probes_per_box * 2 ** (dim * depth_max)
    return num, denom, mixed0


def cell_fraction(grid: CartesianGrid, field: LevelSetField, cell: int, t: float,
                  rule: QuadratureRule) -> tuple[float, float]:
    """Volume-fraction pair (frac_A, frac_B) of one cell; the pair sums to 1."""
    num, denom, _ = _fraction_numerators(grid, field, t, rule, np.asarray([cell]))
    frac_a = float(num[0]) / float(denom)
    return frac_a, 1.0 - frac_a


def phase_region_boxes(grid, field, cell, t, rule, species):
    """Weighted reference-cell boxes covering one phase region of a cell.

    Returns ``(origins, sizes, weights)`` in cell-local coordinates on
    [0,1]^dim: pure boxes carry weight 1, leaf boxes carry the probe share
    of the requested species.  Integrating a function over the region means
    summing weight * integral over each box.
    """
    dim = grid.dim
    depth_max = rule.max_depth
    want_a = species == Species.A
    probes_per_box = 3**dim
    spacing = np.asarray(grid.spacing)
    cell_org = grid.cell_origin(cell)
    out_org, out_size, out_w = [], [], []
    box_ref = np.zeros((1, dim))
    for depth in range(depth_max + 1):
        if box_ref.shape[0] == 0:
            break
        ref_size = 1.0 / 2**depth
        pts = (cell_org + (box_ref[:, None, :] + _DECISION[dim] * ref_size) * spacing).reshape(
            -1, dim
        )
        vals = _eval_field(field, pts, t, box_ref.shape[0])
        codes = kernels.classify(vals)
        keep = codes == (0 if want_a else 1)
        if keep.any():
            out_org.append(box_ref[keep])
            out_size.append(np.full(int(keep.sum()), ref_size))
            out_w.append(np.ones(int(keep.sum())))
        mixed = codes == 2
        if not mixed.any():
            break
        if depth == depth_max:
            m_ref = box_ref[mixed]
            pts = (cell_org + (m_ref[:, None, :] + _PROBES[dim] * ref_size) * spacing).reshape(
                -1, dim
            )
            vals = _eval_field(field, pts, t, m_ref.shape[0])
            neg = kernels.negatives(vals)
            share = neg / float(probes_per_box) if want_a else (probes_per_box - neg) / float(
                probes_per_box
            )
            pos = share > 0.0
            if pos.any():
                out_org.append(m_ref[pos])
                out_size.append(np.full(int(pos.sum()), ref_size))
                out_w.append(share[pos])
        else:
            box_ref = (box_ref[mixed][:, None, :] + _CHILDREN[dim] * (ref_size / 2.0)).reshape(
                -1, dim
            )
    if not out_org:
        return np.zeros((0, dim)), np.zeros(0), np.zeros(0)
    return np.vstack(out_org), np.concatenate(out_size), np.concatenate(out_w)


@dataclass(frozen=True)
class CoincidingFace:
    """Interior face lying exactly on the interface.

    ``owner`` is the cell that keeps the interface (always the lower index);
    ``species`` labels the face for cell coupling: the species that fills the
    non-owner side and is empty in the owner.
    """

    lo: int
    hi: int
    axis: int
    owner: int
    species: Species


@dataclass(frozen=True)
class CutCellMesh:
    """Background grid plus per-cell fraction data at one time level.

    ``frac_a[c]`` is the species-A volume share of cell ``c`` (B holds the
    complement); ``cut[c]`` is true when both shares lie strictly inside
    (zero_tol, 1 - zero_tol).  ``near_interface[c]`` is true when the
    interface provably touches the cell, even if one share rounded to zero;
    occupancy evidence for the interface speed check.  ``edge_species[axis]``
    assigns every interior face of that axis to the species owning it for
    coupling (0 = A, 1 = B).
    """

    grid: CartesianGrid
    time: float
    frac_a: np.ndarray
    cut: np.ndarray
    near_interface: np.ndarray
    zero_tol: float
    coinciding: tuple[CoincidingFace, ...]
    edge_species: dict

    def fractions(self, species: Species) -> np.ndarray:
        return self.frac_a if species == Species.A else 1.0 - self.frac_a

    def fraction(self, cell: int, species: Species) -> float:
        return float(self.fractions(species)[cell])

    def coinciding_empty(self, species: Species) -> frozenset:
        """Zero-fraction cells facing a full same-species cell over a coinciding face."""
        frac = self.fractions(species)
        out = set()
        for face in self.coinciding:
            if frac[face.lo] == 1.0 and frac[face.hi] == 0.0:
                out.add(face.hi)
            elif frac[face.hi] == 1.0 and frac[face.lo] == 0.0:
                out.add(face.lo)
        return frozenset(out)

    def exists_mask(self, species: Species) -> np.ndarray:
        """Cells belonging to the species' mesh: positive share or coinciding-empty."""
        mask = self.fractions(species) > 0.0
        for c in self.coinciding_empty(species):
            mask[c] = True
        return mask

    def phase_cells(self, species: Species) -> np.ndarray:
        return np.flatnonzero(self.exists_mask(species))

    def cut_cells(self) -> np.ndarray:
        return np.flatnonzero(self.cut)


def _snap(frac, zero_tol):
    frac = np.asarray(frac, dtype=float).copy()
    frac[frac < zero_tol] = 0.0
    frac[frac > 1.0 - zero_tol] = 1.0
    return frac


def _face_probe_points(grid, axis, lo_cells):
    """Probe lattice on the faces above ``lo_cells`` along ``axis``."""
    other = [a for a in range(grid.dim) if a != axis]
    fracs = (1.0 / 6.0, 0.5, 5.0 / 6.0)
    combos = np.array(list(itertools.product(fracs, repeat=len(other))))
    offsets = np.zeros((len(combos), grid.dim))
    offsets[:, axis] = 1.0
    for j, a in enumerate(other):
        offsets[:, a] = combos[:, j]
    spacing = np.asarray(grid.spacing)
    org = grid.cell_origins(lo_cells)
    return (org[:, None, :] + offsets * spacing).reshape(-1, grid.dim), len(combos)


def _majority_species(vals):
    """0 for A, 1 for B by probe-sign majority; exact ties go to A."""
    neg = (vals < 0.0).sum(axis=1)
    return np.where(2 * neg >= vals.shape[1], 0, 1).astype(np.int8)


def build_cutcell_mesh(grid: CartesianGrid, field: LevelSetField, t: float,
                       rule: QuadratureRule, zero_tol: float = 1e-12) -> CutCellMesh:
    """Compute fractions for every cell and detect coinciding interfaces."""
    if not 0.0 <= zero_tol < 0.5:
        raise ValueError("zero_tol must lie in [0, 0.5)")
    num, denom, mixed0 = _fraction_numerators(grid, field, t, rule,
                                              np.arange(grid.n_cells))
    frac_a = _snap(num / float(denom), zero_tol)
    cut = (frac_a > zero_tol) & (frac_a < 1.0 - zero_tol)
    near = mixed0 | cut

    coinciding = []
    edge_species = {}
    for axis in range(grid.dim):
        lo, hi = grid.interior_faces(axis)
        if len(lo) == 0:
            edge_species[axis] = np.zeros(0, dtype=np.int8)
            continue
        pts, per_face = _face_probe_points(grid, axis, lo)
        vals = _eval_field(field, pts, t, len(lo))
        codes = _majority_species(vals)
        coin = np.abs(vals).max(axis=1) < COINCIDING_TOL
        for k in np.flatnonzero(coin):
            a, b = int(lo[k]), int(hi[k])
            if frac_a[b] == 1.0:
                sp = Species.A
            elif frac_a[b] == 0.0:
                sp = Species.B
            else:
                sp = Species.A
            codes[k] = 0 if sp == Species.A else 1
            coinciding.append(CoincidingFace(lo=a, hi=b, axis=axis, owner=a, species=sp))
        edge_species[axis] = codes
    return CutCellMesh(
        grid=grid,
        time=float(t),
        frac_a=frac_a,
        cut=cut,
        near_interface=near,
        zero_tol=float(zero_tol),
        coinciding=tuple(coinciding),
        edge_species=edge_species,
    )


def mesh_from_fractions(grid, frac_a, time: float = 0.0, zero_tol: float = 1e-12,
                        coinciding=(), near_interface=None) -> CutCellMesh:
    """Assemble a mesh from given fractions (fixtures, tests, hand meshes).

    Edge species fall back to the fraction majority of the adjacent cells
    since there is no field to probe; interface proximity defaults to the
    cut flags.
    """
    frac_a = np.asarray(frac_a, dtype=float)
    if len(frac_a) != grid.n_cells:
        raise ValueError("one fraction per cell required")
    if frac_a.min() < 0.0 or frac_a.max() > 1.0:
        raise ValueError("fractions must lie in [0, 1]")
    frac_a = _snap(frac_a, zero_tol)
    cut = (frac_a > zero_tol) & (frac_a < 1.0 - zero_tol)
    near = cut.copy() if near_interface is None else np.asarray(near_interface, dtype=bool)
    edge_species = {}
    for axis in range(grid.dim):
        lo, hi = grid.interior_faces(axis)
        mean = 0.5 * (frac_a[lo] + frac_a[hi])
        edge_species[axis] = np.where(mean >= 0.5, 0, 1).astype(np.int8)
    return CutCellMesh(
        grid=grid,
        time=float(time),
        frac_a=frac_a,
        cut=cut,
        near_interface=near,
        zero_tol=float(zero_tol),
        coinciding=tuple(coinciding),
        edge_species=edge_species,
    )


def assign_coinciding_interface(mesh: CutCellMesh) -> CutCellMesh:
    """Give every coinciding face to the lower-index adjacent cell (idempotent)."""
    if not mesh.coinciding:
        return mesh
    fixed = tuple(
        replace(f, lo=min(f.lo, f.hi), hi=max(f.lo, f.hi), owner=min(f.lo, f.hi))
        for f in mesh.coinciding
    )
    if fixed == mesh.coinciding:
        return mesh
    return replace(mesh, coinciding=fixed)


def detect_coinciding_fractions(mesh: CutCellMesh) -> frozenset:
    """(cell, species) pairs that are empty yet face a full neighbor over a
    coinciding face; these degenerate cut cells must be agglomerated."""
    out = set()
    for sp in SPECIES:
        for c in mesh.coinciding_empty(sp):
            out.add((int(c), sp))
    return frozenset(out)


def mesh_to_json(mesh: CutCellMesh) -> str:
    """Serialize fractions, cut flags, and coinciding faces (schema in cli)."""
    doc = {
        "time": mesh.time,
        "shape": list(mesh.grid.shape),
        "origin": list(mesh.grid.origin),
        "spacing": list(mesh.grid.spacing),
        "zero-tol": mesh.zero_tol,
        "cells": [
            {
                "cell": int(i),
                "frac-a": float(mesh.frac_a[i]),
                "frac-b": float(1.0 - mesh.frac_a[i]),
                "cut": bool(mesh.cut[i]),
            }
            for i in range(mesh.grid.n_cells)
        ],
        "coinciding": [
            {
                "lo": f.lo,
                "hi": f.hi,
                "axis": f.axis,
                "owner": f.owner,
                "species": f.species.value,
            }
            for f in mesh.coinciding
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True)
