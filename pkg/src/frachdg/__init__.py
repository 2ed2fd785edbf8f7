"""Hybridized DG solver for 2D space-fractional convection-diffusion problems
with characteristic time stepping on structured triangular meshes."""

from .assembly import (
    BlockSystem,
    DofLayout,
    PenaltyParams,
    assemble_grad_flux,
    assemble_load,
    assemble_mass,
    assemble_penalties,
    compose_system,
)
from .basis import ReferenceBasis, eval_basis
from .errors import FracHDGError, SolverError, ValidationError
from .fracop import FracCouplingMatrix, FractionalOrders, assemble_frac_coupling_matrix, frac_integral_pointwise
from .harness import (
    ErrorReport,
    StudyConfig,
    StudyReport,
    convergence_rate,
    energy_seminorm,
    error_norms,
    run_convergence_study,
    run_single,
    run_stability_probe,
    write_report_csv,
)
from .mesh import Domain, Mesh, axis_ray_segments, build_mesh, locate_point
from .problems import ManufacturedProblem, Poly1D, example51, example52, exact_eval, forcing_eval, rl_derivative_polynomial
from .quadrature import QuadratureRule, interval_quadrature, triangle_quadrature
from .timestepper import SolutionState, VelocityField, advance_step, backtrack_point, solve_linear_system

__version__ = "0.1.0"
