"""Reaction-diffusion on thick fractal junctions.

Library + CLI implementing the full verification pipeline: direct solve on
the periodic junction, layer (cell) problems on truncated periodicity
cells, the homogenized multi-sheeted problem, corrector assembly and
eps-sweep convergence-rate studies.
"""

__version__ = "0.1.0"

from .cell_solver import (CellSolution, CellSpec, cell_spec, extract_far_field,
                          solve_branch_layer_Xi, solve_branch_layer_Z,
                          solve_cell_family, solve_junction_layer)
from .corrector import (CorrectorAssembler, CorrectorConfig, cutoff_chi,
                        default_corrector_config, error_norms, sample_cell,
                        sawtooth)
from .geometry import (GeometryParams, JunctionLayout, MeshResolution,
                       Offsets, StructuredMesh, build_layout, build_mesh,
                       derive_offsets, layout_to_text, validate)
from .harness import (SweepReport, calibrate_time_base, fit_loglog,
                      fit_single_constant, run_single, run_sweep)
from .model import (Certificate, ManufacturedCase, Nonlinearity, ProblemData,
                    affine, certify_bounds, default_problem,
                    make_manufactured_eps, make_manufactured_hom,
                    make_zero_case, michaelis_menten, saturating, tanh_blend)

__all__ = [
    "__version__",
    # geometry
    "GeometryParams", "Offsets", "JunctionLayout", "StructuredMesh",
    "MeshResolution", "validate", "derive_offsets", "build_layout",
    "build_mesh", "layout_to_text",
    # model
    "Nonlinearity", "Certificate", "ProblemData", "ManufacturedCase",
    "affine", "tanh_blend", "saturating", "michaelis_menten",
    "certify_bounds", "default_problem", "make_zero_case",
    "make_manufactured_eps", "make_manufactured_hom",
    # cells
    "CellSpec", "CellSolution", "cell_spec", "solve_junction_layer",
    "solve_branch_layer_Xi", "solve_branch_layer_Z", "solve_cell_family",
    "extract_far_field",
    # corrector
    "CorrectorAssembler", "CorrectorConfig", "default_corrector_config",
    "cutoff_chi", "sawtooth", "sample_cell", "error_norms",
    # harness
    "SweepReport", "run_sweep", "run_single", "fit_loglog",
    "fit_single_constant", "calibrate_time_base",
]
