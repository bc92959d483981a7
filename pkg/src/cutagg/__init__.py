"""Cut-cell agglomeration for dynamic implicit geometries.

Level-set geometries embedded in Cartesian grids produce arbitrarily small
cell fragments; this package maps those fragments onto healthy neighbors
through agglomeration forests that stay identical under any rank count, and
quantifies the mass-matrix conditioning the mapping buys.
"""

from .aggmap import (AggMap, AggPair, SourceSets, UnresolvableIslandError,
                     build_agglomeration, determine_levels, identify_sources,
                     interface_speed_violations, validate_map)
from .algebra import (InjectionOperator, TensorBasis, agglomerate_mass,
                      assemble_injection, coupling_cells, coupling_matrix,
                      inject, phase_mass_matrix, restrict, species_mass_blocks,
                      tensor_basis)
from .cutcell import (CoincidingFace, CutCellMesh, QuadratureRule, Species,
                      assign_coinciding_interface, build_cutcell_mesh,
                      cell_fraction, detect_coinciding_fractions,
                      mesh_from_fractions, mesh_to_json)
from .diagnostics import (StepMetrics, condition_number, global_condition,
                          stencil_conditions, write_metrics_csv)
from .geometry import (LevelSetField, RigidMotion, axis_plane,
                       colliding_spheres, popcorn, rotate, sphere,
                       tilted_torus, union_max, vanishing_sphere)
from .grid import (CartesianGrid, Partition, build_grid, face_neighbors,
                   partition_strips)
from .parallel import RankNetwork, run_rounds_to_fixpoint
from .scenarios import (ScenarioConfig, ScenarioError, compare_runs,
                        run_scenario, scenario_names)

__version__ = "0.1.0"

__all__ = [
    "AggMap",
    "AggPair",
    "CartesianGrid",
    "CoincidingFace",
    "CutCellMesh",
    "InjectionOperator",
    "LevelSetField",
    "Partition",
    "QuadratureRule",
    "RankNetwork",
    "RigidMotion",
    "ScenarioConfig",
    "ScenarioError",
    "SourceSets",
    "Species",
    "StepMetrics",
    "TensorBasis",
    "UnresolvableIslandError",
    "agglomerate_mass",
    "assemble_injection",
    "assign_coinciding_interface",
    "axis_plane",
    "build_agglomeration",
    "build_cutcell_mesh",
    "build_grid",
    "cell_fraction",
    "colliding_spheres",
    "compare_runs",
    "condition_number",
    "coupling_cells",
    "coupling_matrix",
    "determine_levels",
    "detect_coinciding_fractions",
    "face_neighbors",
    "global_condition",
    "identify_sources",
    "inject",
    "interface_speed_violations",
    "mesh_from_fractions",
    "mesh_to_json",
    "partition_strips",
    "phase_mass_matrix",
    "popcorn",
    "restrict",
    "rotate",
    "run_rounds_to_fixpoint",
    "run_scenario",
    "scenario_names",
    "species_mass_blocks",
    "sphere",
    "stencil_conditions",
    "tensor_basis",
    "tilted_torus",
    "union_max",
    "validate_map",
    "vanishing_sphere",
    "write_metrics_csv",
]
