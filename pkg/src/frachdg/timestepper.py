"""Characteristic backward-Euler stepping.

Each step traces the volume quadrature points back one step along ``b``,
integrates the previous discrete solution at the feet against the test
functions, and solves the coupled system.  Feet outside the closed domain
contribute zero (homogeneous Dirichlet extension).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import BlockSystem, assemble_load
from .basis import ReferenceBasis
from .errors import SolverError, ValidationError
from .mesh import Mesh, locate_points
from .problems import VelocityField, ZERO_VELOCITY
from .quadrature import QuadratureRule, triangle_quadrature

log = logging.getLogger(__name__)

__all__ = [
    "VelocityField",
    "SolutionState",
    "backtrack_point",
    "assemble_advected_term",
    "evaluate_field",
    "l2_project",
    "initial_state",
    "solve_linear_system",
    "advance_step",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolutionState:
    n: int
    t: float
    vec: np.ndarray  # packed (u | sigma_x | sigma_y | p_x | p_y)

    def field(self, layout, name: str) -> np.ndarray:
        return self.vec[layout.slice(name)]


def backtrack_point(x, b: VelocityField, t_n: float, dt: float):
    """Foot of the characteristic: ``x - b(x, t_n) dt`` (not clamped)."""
    x = np.asarray(x, dtype=float)
    bx, by = b(x[..., 0], x[..., 1], t_n)
    return np.stack([x[..., 0] - bx * dt, x[..., 1] - by * dt], axis=-1)


def evaluate_field(mesh: Mesh, basis: ReferenceBasis, coeffs, pts) -> np.ndarray:
    """Broken polynomial at arbitrary points; zero outside the domain."""
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, 2)
    tri, _ = locate_points(mesh, flat)
    out = np.zeros(len(flat))
    ok = tri >= 0
    if np.any(ok):
        ref = mesh.to_reference(tri[ok], flat[ok])
        c = np.asarray(coeffs, dtype=float).reshape(mesh.n_triangles, basis.dim)
        out[ok] = np.einsum("pi,pi->p", basis.values(ref), c[tri[ok]])
    return out.reshape(pts.shape[:-1])


def assemble_advected_term(
    mesh: Mesh,
    basis: ReferenceBasis,
    u_prev,
    b: VelocityField,
    t_n: float,
    dt: float,
    rule: QuadratureRule,
) -> np.ndarray:
    """Vector of ``int_E u_prev(x - b(x, t_n) dt) phi_i(x) dx``."""
    phi = basis.values(rule.points)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None, :, :])
    if b.is_zero:
        feet_vals = np.einsum("qi,ti->tq", phi, np.asarray(u_prev).reshape(-1, basis.dim))
    else:
        feet_vals = evaluate_field(mesh, basis, u_prev, backtrack_point(pts, b, t_n, dt))
    loc = np.einsum("q,tq,qi->ti", rule.weights, feet_vals, phi) * (2.0 * mesh.area)[:, None]
    return loc.ravel()


def l2_project(mesh: Mesh, basis: ReferenceBasis, func, degree: int = 10) -> np.ndarray:
    """Elementwise L2 projection of ``func(x, y)`` onto the broken space."""
    rule = triangle_quadrature(degree)
    phi = basis.values(rule.points)
    mref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None, :, :])
    fv = np.broadcast_to(func(pts[..., 0], pts[..., 1]), pts.shape[:2])
    rhs = np.einsum("q,tq,qi->ti", rule.weights, fv, phi)
    return np.linalg.solve(mref, rhs.T).T.ravel()


def initial_state(system: BlockSystem, problem) -> SolutionState:
    vec = np.zeros(system.layout.total)
    vec[system.layout.slice("u")] = l2_project(system.mesh, system.basis, problem.initial)
    return SolutionState(0, 0.0, vec)


def _factor(system: BlockSystem):
    if system._lu is None:
        try:
            system._lu = spla.splu(system.A)
        except RuntimeError as exc:  # singular factor
            raise SolverError(f"factorisation failed: {exc}") from exc
    return system._lu


def solve_linear_system(system: BlockSystem, rhs) -> np.ndarray:
    """Direct solve with the cached LU factors plus iterative refinement.

    Raises :class:`SolverError` if the relative residual stays above
    ``RESIDUAL_TOL``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (system.layout.total,):
        raise ValidationError(f"rhs has shape {rhs.shape}, expected ({system.layout.total},)")
    norm = np.linalg.norm(rhs)
    if norm == 0.0:
        return np.zeros_like(rhs)
    lu = _factor(system)
    x = lu.solve(rhs)
    res = np.linalg.norm(rhs - system.A @ x) / norm
    for _ in range(3):
        if res <= RESIDUAL_TOL:
            break
        x = x + lu.solve(rhs - system.A @ x)
        res = np.linalg.norm(rhs - system.A @ x) / norm
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {RESIDUAL_TOL:g}", residual=res)
    return x


def advance_step(system: BlockSystem, state: SolutionState, problem, t_n: float | None = None) -> SolutionState:
    """One characteristic backward-Euler step from ``state`` to ``t_n``.

    ``problem`` supplies ``forcing(x, y, t)`` and ``velocity``.
    """
    dt = system.dt
    if t_n is None:
        t_n = state.t + dt
    lay = system.layout
    u_prev = state.vec[lay.slice("u")]
    velocity = getattr(problem, "velocity", ZERO_VELOCITY)
    adv = assemble_advected_term(system.mesh, system.basis, u_prev, velocity, t_n, dt, system.rule)
    rhs = np.zeros(lay.total)
    rhs[lay.slice("u")] = assemble_load(system.mesh, system.basis, problem.forcing, t_n, system.rule) + adv / dt
    return SolutionState(state.n + 1, float(t_n), solve_linear_system(system, rhs))
