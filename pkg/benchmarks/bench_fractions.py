"""Benchmark the two volume-fraction kernel lanes on full mesh builds.

The subdivision quadrature spends nearly all of its time classifying level
set samples and accumulating per-cell counts.  Those four kernels exist
twice: a Cython extension (``cutagg.kernels._core``) and a NumPy fallback
(``cutagg.kernels.pure``).  This script times complete ``build_cutcell_mesh``
calls under each lane and verifies the fraction arrays match bitwise, which
they must since both lanes emit integer counts.

Run from the repository root::

    python3 benchmarks/bench_fractions.py [--repeat N] [--quick]
"""

import argparse
import time

import numpy as np

from cutagg import (QuadratureRule, Species, build_cutcell_mesh, build_grid,
                    geometry, kernels)
from cutagg.kernels import get_lane

LANE_NAMES = ("classify", "negatives", "accumulate_pure", "accumulate_counts")


def bind_lane(lane):
    for name in LANE_NAMES:
        setattr(kernels, name, getattr(lane, name))


def workloads(quick: bool):
    yield ("sphere2d 30^2 depth6",
           build_grid(2, (30, 30), (-0.5, -0.5), (1.0, 1.0)),
           geometry.vanishing_sphere(dim=2, initial_radius=0.6, shrink_rate=1.0),
           QuadratureRule(max_depth=6, gauss_order=2), 0.3)
    yield ("popcorn2d 64^2 depth5",
           build_grid(2, (64, 64), (-0.5, -0.5), (1.0, 1.0)),
           geometry.popcorn(2, 0.3),
           QuadratureRule(max_depth=5, gauss_order=2), 0.0)
    if not quick:
        yield ("sphere2d 96^2 depth6",
               build_grid(2, (96, 96), (-0.5, -0.5), (1.0, 1.0)),
               geometry.vanishing_sphere(dim=2, initial_radius=0.6,
                                         shrink_rate=1.0),
               QuadratureRule(max_depth=6, gauss_order=2), 0.3)
        yield ("sphere3d 24^3 depth4",
               build_grid(3, (24, 24, 24), (-0.5,) * 3, (1.0,) * 3),
               geometry.vanishing_sphere(dim=3, initial_radius=0.6,
                                         shrink_rate=1.0),
               QuadratureRule(max_depth=4, gauss_order=2), 0.3)


def time_lane(lane, grid, field, rule, t, repeat):
    bind_lane(lane)
    mesh = build_cutcell_mesh(grid, field, t, rule)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        build_cutcell_mesh(grid, field, t, rule)
        best = min(best, time.perf_counter() - start)
    return mesh, best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3,
                    help="timed repetitions per lane (best-of), default 3")
    ap.add_argument("--quick", action="store_true",
                    help="small workloads only")
    args = ap.parse_args()

    pure = get_lane("pure")
    try:
        compiled = get_lane("compiled")
    except RuntimeError:
        compiled = None
        print("compiled lane unavailable; timing the pure lane only\n")

    header = f"{'workload':26s} {'pure [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s}  match"
    print(header)
    print("-" * len(header))
    try:
        for name, grid, field, rule, t in workloads(args.quick):
            mesh_p, t_pure = time_lane(pure, grid, field, rule, t, args.repeat)
            if compiled is None:
                print(f"{name:26s} {t_pure:10.4f} {'-':>13s} {'-':>8s}  -")
                continue
            mesh_c, t_comp = time_lane(compiled, grid, field, rule, t,
                                       args.repeat)
            same = all(
                np.array_equal(mesh_p.fractions(sp), mesh_c.fractions(sp))
                for sp in Species)
            print(f"{name:26s} {t_pure:10.4f} {t_comp:13.4f} "
                  f"{t_pure / t_comp:8.2f}x  {'yes' if same else 'NO'}")
            if not same:
                raise SystemExit("lane outputs diverged; see kernels contract")
    finally:
        bind_lane(kernels.active)


if __name__ == "__main__":
    main()
