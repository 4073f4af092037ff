"""Periodic homogenization of a thermo-diffusion system with coagulation and
surface deposition in perforated 2D domains: cell problems, micro and macro
solvers, and a corrector-rate harness."""

from .cell import CellSolution, EffectiveCoefficients, effective_tensors, eval_corrector, solve_all, solve_cell_problem
from .coefficients import (MollifierConfig, PhysicalParams, ScalarFieldSpec, SmoluchowskiParams, TensorFieldSpec,
                           constant, cutoff_function, iso, laminate, mollified_gradient, smoluchowski_rate, trig)
from .corrector import (ConvergenceReport, ErrorRecord, StudyConfig, convergence_study, corrector_norms,
                        fit_rate, pep_diagnostic, reconstruct)
from .fields import FeFunction, SurfaceFunction
from .geometry import (CellGeometry, Mesh, PerforatedDomain, build_cell_geometry, build_cell_mesh,
                       build_perforated_mesh, build_unit_square_mesh, default_cell, no_hole_cell)
from .macro import MacroState, init_macro, run_macro, step_macro
from .micro import InitialData, MicroState, init_micro, run_micro, step_micro

__version__ = "0.1.0"
