"""Finite volume solver for the truncated collisional breakage equation."""

__version__ = "0.1.0"

from .errors import (CollBreakError, ConfigError, EvaluationError, InvariantViolation,
                     MeshError, ProjectionError, StabilityError, StabilityViolation)
from .mesh import (Mesh, State, cell_average_projection, make_geometric_mesh,
                   make_uniform_mesh)
from .kernels import (AtomicBreakage, BreakageDistribution, CollisionKernel,
                      ConstantKernel, ContinuousBreakage, CustomKernel, KernelTables,
                      PiecewiseH2Kernel, PowerLawBreakage, ProductKernel, SumKernel,
                      eval_collision, frag_integral, precompute_tables,
                      verify_mass_condition)
from .solver import (SolverConfig, StabilityParams, max_stable_dt, simulate,
                     stability_constant, step)
from .analysis import (ConvergenceReport, ConvergenceRow, MomentSeries, TestCase,
                       builtin_case, convergence_study, eoc_from_errors, moment,
                       moment_series, total_number)

__all__ = [name for name in dir() if not name.startswith("_")]
