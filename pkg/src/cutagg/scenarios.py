"""Dynamic interface scenarios and the per-step driver.

Every scenario runs on a unit time horizon sampled uniformly: step k works
on the mesh pair at (k-1)/steps and k/steps.  A step checks the interface
speed limit, builds and validates the agglomeration map, assembles the
species operators, and records conditioning metrics.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .aggmap import (SPECIES, UnresolvableIslandError, build_agglomeration,
                     identify_sources, interface_speed_violations, validate_map)
from .algebra import (agglomerate_mass, assemble_injection, species_mass_blocks,
                      tensor_basis)
from .cutcell import QuadratureRule, build_cutcell_mesh, mesh_to_json
from .diagnostics import (StepMetrics, global_condition, max_finite,
                          stencil_conditions, write_metrics_csv)
from .grid import build_grid, partition_strips
from .parallel import RankNetwork

__all__ = [
    "SCENARIOS",
    "RunResult",
    "ScenarioConfig",
    "ScenarioError",
    "compare_runs",
    "default_resolution",
    "make_field",
    "run_scenario",
    "scenario_names",
]


class ScenarioError(RuntimeError):
    """Driver failure with a process exit code: 2 config, 3 island, 4 speed."""

    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


@dataclass(frozen=True)
class _ScenarioSpec:
    dim: int
    origin: tuple
    extent: tuple
    default_res: int
    default_steps: int
    default_mode: str
    build: object


def _vanishing_sphere(dim):
    return lambda: geometry.vanishing_sphere(dim=dim, initial_radius=0.6,
                                             shrink_rate=1.0)


def _colliding():
    return geometry.colliding_spheres(dim=2, sphere_radius=0.3, speed=0.9)


def _popcorn(dim):
    def build():
        base = geometry.popcorn(dim=dim, core_radius=0.6, amplitude=2.0, width=0.2)
        omega = (2.0 * math.pi / 5.0) if dim == 2 else (0.0, 0.0, 2.0 * math.pi / 5.0)
        return geometry.rotate(base, geometry.RigidMotion(omega))
    return build


def _torus():
    base = geometry.tilted_torus(r_major=0.39, r_minor=0.26,
                                 tilt_angle=math.pi / 4.0)
    return geometry.rotate(base, geometry.RigidMotion((0.0, math.pi / 4.0, 0.0)))


def _plane(dim):
    return lambda: geometry.axis_plane(dim=dim, axis=0, offset=0.5)


SCENARIOS = {
    "vanishing-sphere2d": _ScenarioSpec(2, (-0.5, -0.5), (1.0, 1.0), 30, 100,
                                        "splitting", _vanishing_sphere(2)),
    "vanishing-sphere3d": _ScenarioSpec(3, (-0.5,) * 3, (1.0,) * 3, 30, 100,
                                        "splitting", _vanishing_sphere(3)),
    "colliding-spheres": _ScenarioSpec(2, (-1.0, -0.5), (2.0, 1.0), 64, 60,
                                       "splitting", _colliding),
    "popcorn2d": _ScenarioSpec(2, (-1.0, -1.0), (2.0, 2.0), 32, 40, "splitting",
                               _popcorn(2)),
    "popcorn3d": _ScenarioSpec(3, (-1.0,) * 3, (2.0,) * 3, 24, 40, "splitting",
                               _popcorn(3)),
    "torus": _ScenarioSpec(3, (-1.0,) * 3, (2.0,) * 3, 24, 40, "splitting", _torus),
    "plane2d": _ScenarioSpec(2, (0.0, 0.0), (1.0, 1.0), 10, 4, "static",
                             _plane(2)),
    "plane3d": _ScenarioSpec(3, (0.0,) * 3, (1.0,) * 3, 10, 4, "static",
                             _plane(3)),
}


def scenario_names() -> tuple:
    return tuple(sorted(SCENARIOS))


def make_field(name: str):
    try:
        return SCENARIOS[name].build()
    except KeyError:
        raise ScenarioError(2, f"unknown scenario {name!r}; "
                               f"choose from {', '.join(scenario_names())}")


def default_resolution(name: str, res: int | None = None) -> tuple:
    """Cells per axis, scaled so cells stay square in stretched domains."""
    spec = SCENARIOS[name]
    base = res if res is not None else spec.default_res
    longest = max(spec.extent)
    out = tuple(max(1, round(base * e / longest)) for e in spec.extent)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run needs; JSON round-trips with kebab-case keys."""

    scenario: str
    resolution: tuple | None = None
    degree: int = 1
    alpha: float = 0.3
    mode: str | None = None
    steps: int | None = None
    ranks: int = 1
    depth: int = 4
    gauss_order: int = 2
    zero_tol: float = 1e-12
    kappa_g: bool = False
    seed: int | None = None
    out: str = "."
    dump_map: bool = False
    dump_mesh: bool = False

    def to_json(self) -> str:
        doc = {
            "scenario": self.scenario,
            "resolution": list(self.resolution) if self.resolution else None,
            "degree": self.degree,
            "alpha": self.alpha,
            "mode": self.mode,
            "steps": self.steps,
            "ranks": self.ranks,
            "depth": self.depth,
            "gauss-order": self.gauss_order,
            "zero-tol": self.zero_tol,
            "kappa-g": self.kappa_g,
            "seed": self.seed,
            "out": self.out,
            "dump-map": self.dump_map,
            "dump-mesh": self.dump_mesh,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        doc = json.loads(text)
        kw = {k.replace("-", "_"): v for k, v in doc.items()}
        if kw.get("resolution") is not None:
            kw["resolution"] = tuple(kw["resolution"])
        return cls(**kw)


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: list
    csv_path: str | None
    files: list = field(default_factory=list)
    maps: list = field(default_factory=list)


def _resolve(config: ScenarioConfig):
    name = config.scenario
    if name not in SCENARIOS:
        raise ScenarioError(2, f"unknown scenario {name!r}; "
                               f"choose from {', '.join(scenario_names())}")
    spec = SCENARIOS[name]
    res = config.resolution
    if res is None:
        res = default_resolution(name)
    elif isinstance(res, int):
        res = default_resolution(name, res)
    elif len(res) == 1:
        res = default_resolution(name, res[0])
    elif len(res) != spec.dim:
        raise ScenarioError(2, f"scenario {name} is {spec.dim}D; resolution "
                               f"{res} does not fit")
    mode = config.mode if config.mode is not None else spec.default_mode
    steps = config.steps if config.steps is not None else spec.default_steps
    if steps < 1:
        raise ScenarioError(2, "steps must be at least 1")
    if not 0.0 <= config.alpha < 1.0:
        raise ScenarioError(2, "alpha must lie in [0, 1)")
    if config.degree < 0:
        raise ScenarioError(2, "degree must be nonnegative")
    if mode not in ("static", "splitting", "moving"):
        raise ScenarioError(2, f"unknown mode {mode!r}")
    return spec, tuple(int(r) for r in res), mode, int(steps)


def _species_metrics(step, species, config, mode, mesh_prev, mesh_next, field_,
                     rule, basis, agg, sources):
    mass = species_mass_blocks(mesh_next, field_, rule, basis, species)
    injection = assemble_injection(agg, basis, mesh_next.grid, mesh_next, species)
    agg_mass = agglomerate_mass(injection, mass)
    rep = dict(agg.roots[species])
    kappas = stencil_conditions(mesh_next, species, agg_mass, rep)
    max_kappa, inf_count = max_finite(kappas.values())

    kappa_g = None
    if config.kappa_g and agg_mass:
        value, status = global_condition(agg_mass)
        kappa_g = value if status == "ok" else math.nan

    frac = mesh_next.fractions(species)
    cut_idx = np.flatnonzero(mesh_next.cut)
    min_frac = float(frac[cut_idx].min()) if len(cut_idx) else math.nan

    denom_cells = (set(np.flatnonzero(mesh_prev.cut))
                   | set(np.flatnonzero(mesh_next.cut))
                   | mesh_next.coinciding_empty(species))
    n_pairs = len(agg.pairs[species])
    pct = 100.0 * n_pairs / len(denom_cells) if denom_cells else 0.0

    return StepMetrics(
        step=step,
        species=species,
        alpha=config.alpha,
        degree=config.degree,
        n_cut=int(mesh_next.cut.sum()),
        n_src=len(sources[species].all_sources),
        pct_agg=pct,
        min_frac=min_frac,
        max_kappa_s=max_kappa,
        kappa_g=kappa_g,
        inf_count=inf_count,
    )


def run_scenario(config: ScenarioConfig, keep_maps: bool = False,
                 write_csv: bool = True) -> RunResult:
    """Execute one scenario end to end; raises ScenarioError on 2/3/4 cases."""
    spec, res, mode, steps = _resolve(config)
    config = replace(config, resolution=res, mode=mode, steps=steps)
    grid = build_grid(spec.dim, res, origin=spec.origin, extent=spec.extent)
    try:
        partition = partition_strips(grid, config.ranks)
    except ValueError as err:
        raise ScenarioError(2, str(err))
    network = RankNetwork(partition)
    field_ = SCENARIOS[config.scenario].build()
    rule = QuadratureRule(max_depth=config.depth, gauss_order=config.gauss_order)
    basis = tensor_basis(spec.dim, config.degree)
    rng = np.random.default_rng(config.seed) if config.seed is not None else None

    out_dir = config.out
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(config=config, metrics=[], csv_path=None)

    mesh_prev = build_cutcell_mesh(grid, field_, 0.0, rule, config.zero_tol)
    for k in range(1, steps + 1):
        t = k / steps
        mesh_next = build_cutcell_mesh(grid, field_, t, rule, config.zero_tol)

        speed = interface_speed_violations(mesh_prev, mesh_next, mode)
        if speed:
            kind, sp, cell = speed[0]
            raise ScenarioError(
                4, f"step {k}: interface moved more than one cell per step "
                   f"({kind} {sp.value} cell {cell}, {len(speed)} total)")

        sources = identify_sources(mesh_prev, mesh_next, config.alpha, mode)
        try:
            agg = build_agglomeration(mesh_prev, mesh_next, config.alpha, mode,
                                      network, rng=rng)
        except UnresolvableIslandError as err:
            raise ScenarioError(3, f"step {k}: {err}")

        bad = validate_map(agg, mesh_prev, mesh_next, partition, sources)
        if bad:
            raise RuntimeError(f"step {k}: invalid map: " + "; ".join(bad))

        for sp in SPECIES:
            result.metrics.append(_species_metrics(
                k, sp, config, mode, mesh_prev, mesh_next, field_, rule, basis,
                agg, sources))

        if keep_maps:
            result.maps.append(agg)
        if config.dump_map:
            for sp in SPECIES:
                path = os.path.join(out_dir, f"map_step{k}_{sp.value}.json")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(agg.to_json(canonical=True, species=sp))
                dot = os.path.join(out_dir, f"map_step{k}_{sp.value}.dot")
                with open(dot, "w", encoding="utf-8") as fh:
                    fh.write(agg.to_dot(species=sp))
                result.files += [path, dot]
        if config.dump_mesh:
            path = os.path.join(out_dir, f"mesh_step{k}.json")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(mesh_to_json(mesh_next))
            result.files.append(path)

        mesh_prev = mesh_next

    if write_csv:
        csv_path = os.path.join(out_dir, "metrics.csv")
        write_metrics_csv(csv_path, result.metrics)
        result.csv_path = csv_path
        result.files.append(csv_path)
    return result


def _read_csv(path: str) -> tuple:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as err:
        raise ScenarioError(2, f"{path}: {err.strerror}")
    if not lines:
        raise ScenarioError(2, f"{path}: empty metrics file")
    header = lines[0]
    rows = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        key = (int(parts[0]), parts[1])
        rows[key] = parts
    return header, rows


def compare_runs(path_a: str, path_b: str, assert_trend: bool = False) -> str:
    """Row-aligned conditioning comparison of two metric files.

    Ratios are max_kappa_s(a) / max_kappa_s(b); with ``assert_trend`` the
    second run must never be worse than the first (nan rows are skipped).
    """
    header_a, rows_a = _read_csv(path_a)
    header_b, rows_b = _read_csv(path_b)
    if header_a != header_b:
        raise ScenarioError(2, "metric files have different schemas")
    if set(rows_a) != set(rows_b):
        raise ScenarioError(2, "metric files cover different steps or species")
    idx = header_a.split(",").index("max_kappa_s")
    lines = ["step species kappa_a kappa_b ratio"]
    worst = None
    for key in sorted(rows_a):
        ka = float(rows_a[key][idx])
        kb = float(rows_b[key][idx])
        ratio = ka / kb if kb not in (0.0,) and math.isfinite(ka) and math.isfinite(kb) else math.nan
        lines.append(f"{key[0]} {key[1]} {ka:.6e} {kb:.6e} {ratio:.6e}")
        if math.isfinite(ka) and math.isfinite(kb):
            if kb > ka * (1.0 + 1e-12):
                worst = worst or key
    if assert_trend and worst is not None:
        raise ScenarioError(
            1, f"conditioning regressed at step {worst[0]} species {worst[1]}")
    return "\n".join(lines) + "\n"
