"""Conditioning diagnostics and per-step metric rows.

Mass matrices here are block-diagonal, so a stencil condition number is the
spread of singular values over the participating blocks.  Blocks whose
smallest singular value underflows (below 1e-300) flag the stencil as
infinite; infinite stencils are counted separately and excluded from
maxima, otherwise one degenerate sliver would hide every finite trend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutcell import CutCellMesh, Species
from .grid import face_neighbors

__all__ = [
    "CSV_HEADER",
    "StepMetrics",
    "condition_number",
    "format_metric_row",
    "global_condition",
    "max_finite",
    "stencil_conditions",
    "write_metrics_csv",
]

SINGULAR_FLOOR = 1e-300
DENSE_LIMIT = 4000


def _block_extremes(blocks) -> tuple:
    smax = 0.0
    smin = math.inf
    count = 0
    for b in blocks:
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            continue
        s = np.linalg.svd(b, compute_uv=False)
        smax = max(smax, float(s[0]))
        smin = min(smin, float(s[-1]))
        count += 1
    if count == 0:
        raise ValueError("condition of an empty block set is undefined")
    return smax, smin


def condition_number(blocks) -> float:
    """Spectral condition of a block-diagonal matrix given its blocks.

    Returns inf when the smallest singular value sits below the underflow
    floor; such a matrix is numerically singular.
    """
    smax, smin = _block_extremes(blocks)
    if smin < SINGULAR_FLOOR:
        return math.inf
    return smax / smin


def stencil_conditions(mesh: CutCellMesh, species: Species, blocks: dict,
                       rep: dict | None = None) -> dict:
    """Condition number of every troubled cell's stencil.

    Troubled cells are the cut cells plus the species' coinciding-empty
    cells.  A stencil is the cell and its face neighbors inside the species
    mesh, each first sent through ``rep`` (source -> kept representative)
    when an agglomeration is in effect; ``blocks`` maps representatives to
    their mass blocks.
    """
    grid = mesh.grid
    rep = rep or {}
    exists = mesh.exists_mask(species)
    focus = sorted(set(np.flatnonzero(mesh.cut)) | mesh.coinciding_empty(species))
    out = {}
    for c in focus:
        c = int(c)
        if not exists[c]:
            continue
        members = {c} | {v for v in face_neighbors(grid, c) if exists[v]}
        reps = {int(rep.get(m, m)) for m in members}
        out[c] = condition_number([blocks[r] for r in sorted(reps)])
    return out


def max_finite(values) -> tuple:
    """(largest finite value or nan, count of infinite values)."""
    finite = [v for v in values if math.isfinite(v)]
    infs = sum(1 for v in values if math.isinf(v))
    return (max(finite) if finite else math.nan), infs


def global_condition(blocks: dict, dense_limit: int = DENSE_LIMIT) -> tuple:
    """Condition of the assembled block-diagonal matrix via one dense SVD.

    Returns (value, "ok") or (None, "too-large") when the dense matrix would
    exceed ``dense_limit`` rows.
    """
    cells = sorted(blocks)
    if not cells:
        raise ValueError("global condition of an empty matrix is undefined")
    m = np.asarray(blocks[cells[0]]).shape[0]
    n = m * len(cells)
    if n > dense_limit:
        return None, "too-large"
    dense = np.zeros((n, n))
    for i, c in enumerate(cells):
        dense[i * m:(i + 1) * m, i * m:(i + 1) * m] = np.asarray(blocks[c], dtype=float)
    s = np.linalg.svd(dense, compute_uv=False)
    if float(s[-1]) < SINGULAR_FLOOR:
        return math.inf, "ok"
    return float(s[0]) / float(s[-1]), "ok"


CSV_HEADER = ("step,species,alpha,degree,n_cut,n_src,pct_agg,min_frac,"
              "max_kappa_s,kappa_g,inf_count")


@dataclass(frozen=True)
class StepMetrics:
    """One CSV row: conditioning state of one species after one step."""

    step: int
    species: Species
    alpha: float
    degree: int
    n_cut: int
    n_src: int
    pct_agg: float
    min_frac: float
    max_kappa_s: float
    kappa_g: float | None
    inf_count: int


def _fmt(x) -> str:
    if x is None:
        return "nan"
    return f"{float(x):.17e}"


def format_metric_row(m: StepMetrics) -> str:
    return ",".join([
        str(m.step),
        m.species.value,
        _fmt(m.alpha),
        str(m.degree),
        str(m.n_cut),
        str(m.n_src),
        _fmt(m.pct_agg),
        _fmt(m.min_frac),
        _fmt(m.max_kappa_s),
        _fmt(m.kappa_g),
        str(m.inf_count),
    ])


def write_metrics_csv(path, rows) -> None:
    """Fixed-format CSV so identical runs produce identical bytes."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for m in rows:
            fh.write(format_metric_row(m) + "\n")
