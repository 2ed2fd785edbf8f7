"""Bilinear forms and the coupled five-field block system.

Unknowns are ordered ``(u | sigma_x | sigma_y | p_x | p_y)``; inside each
field the degree of freedom ``(E, i)`` sits at ``E * dim + i``.  The
equations are tested with ``(v | omega_x | omega_y | q_x | q_y)``::

    [ M/dt + D   Gx     Gy     0     0  ] [u ]   [ F + M-advected/dt ]
    [ 0          M      0     -Bx    0  ] [sx]   [ 0 ]
    [ 0          0      M      0    -By ] [sy] = [ 0 ]
    [ -Gx^T      Epen   0      M     0  ] [px]   [ 0 ]
    [ -Gy^T      0      Epen   0     M  ] [py]   [ 0 ]

where ``v^T (Gx sx + Gy sy)`` is the flux form
``(sigma, grad v) - ({sigma} . n_e, [v])`` summed over all edges.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import ReferenceBasis
from .errors import ValidationError
from .mesh import Mesh
from .quadrature import QuadratureRule, interval_quadrature, triangle_quadrature

log = logging.getLogger(__name__)

FIELDS = ("u", "sigma_x", "sigma_y", "p_x", "p_y")

__all__ = [
    "FIELDS",
    "PenaltyParams",
    "DofLayout",
    "BlockSystem",
    "volume_rule",
    "assemble_mass",
    "assemble_grad_flux",
    "assemble_penalties",
    "assemble_load",
    "compose_system",
]


def volume_rule(basis: ReferenceBasis, degree: int | None = None) -> QuadratureRule:
    return triangle_quadrature(degree if degree is not None else 2 * basis.degree + 2)


def _resolve_scale(value, h):
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip().replace(" ", "").lower()
    if s.startswith("o(") and s.endswith(")"):
        s = s[2:-1]
    table = {"1": 1.0, "h": h, "1/h": 1.0 / h, "h^-1": 1.0 / h, "h**-1": 1.0 / h, "h^{-1}": 1.0 / h}
    if s in table:
        return table[s]
    try:
        return float(s)
    except ValueError:
        raise ValidationError(f"cannot interpret penalty scaling {value!r}") from None


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weights; either numbers or the scalings ``"1"``, ``"1/h"``, ``"h"``."""

    eps1: float | str = 1.0
    eps2: float | str = 1.0

    def resolve(self, h: float) -> tuple[float, float]:
        e1, e2 = _resolve_scale(self.eps1, h), _resolve_scale(self.eps2, h)
        if not e1 > 0.0:
            raise ValidationError(f"eps1 must be positive, got {e1}")
        if e2 < 0.0:
            raise ValidationError(f"eps2 must be nonnegative, got {e2}")
        if e2 == 0.0:
            log.warning("eps2 = 0: sigma jumps are not penalised")
        return e1, e2


@dataclass(frozen=True)
class DofLayout:
    n_triangles: int
    dim: int

    @property
    def block(self) -> int:
        return self.n_triangles * self.dim

    @property
    def total(self) -> int:
        return len(FIELDS) * self.block

    def offset(self, name: str) -> int:
        return FIELDS.index(name) * self.block

    def slice(self, name: str) -> slice:
        o = self.offset(name)
        return slice(o, o + self.block)

    def dof(self, name: str, tri, i):
        return self.offset(name) + np.asarray(tri) * self.dim + np.asarray(i)

    def split(self, vec) -> dict[str, np.ndarray]:
        vec = np.asarray(vec)
        return {name: vec[self.slice(name)] for name in FIELDS}


def _physical_grads(mesh, basis, ref_pts):
    g = basis.gradients(ref_pts)  # (Q, nk, 2)
    return np.einsum("qir,trx->tqix", g, mesh.jac_inv)  # (T, Q, nk, 2)


def assemble_mass(mesh: Mesh, basis: ReferenceBasis, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    rule = rule or volume_rule(basis)
    phi = basis.values(rule.points)
    mref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    mref = 0.5 * (mref + mref.T)
    return sp.kron(sp.diags(2.0 * mesh.area), sp.csr_matrix(mref), format="csr")


def _edge_rule(basis, n_edge):
    return interval_quadrature("legendre", n_edge or 2 * basis.degree + 1, (0.0, 1.0))


def _edge_traces(mesh, basis, rule, e):
    """Physical quadrature points, weights and traces of both neighbours."""
    va, vb = mesh.vertices[mesh.edge_vertices[e]]
    pts = va[None, :] + rule.points[:, None] * (vb - va)[None, :]
    w = rule.weights * mesh.edge_length[e]
    t1, t2 = mesh.edge_triangles[e]
    phi1 = basis.values(mesh.to_reference(np.full(len(pts), t1), pts))
    phi2 = None if t2 < 0 else basis.values(mesh.to_reference(np.full(len(pts), t2), pts))
    return w, int(t1), int(t2), phi1, phi2


class _Coo:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rdofs, cdofs, block):
        r, c = np.meshgrid(rdofs, cdofs, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(np.asarray(block).ravel())

    def tocsr(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        m = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n, self.n),
        ).tocsr()
        m.sum_duplicates()
        return m


def assemble_grad_flux(
    mesh: Mesh,
    basis: ReferenceBasis,
    rule: QuadratureRule | None = None,
    n_edge: int | None = None,
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """``(Gx, Gy)`` with ``v^T (Gx tx + Gy ty) = (tau, grad v) - ({tau}.n_e, [v])``.

    Rows index the scalar test function ``v``; columns the components of
    ``tau``.  The edge sum runs over all edges; on boundary edges the average
    and the jump both reduce to the one-sided trace.
    """
    rule = rule or volume_rule(basis)
    erule = _edge_rule(basis, n_edge)
    nk = basis.dim
    N = mesh.n_triangles * nk
    phi = basis.values(rule.points)
    grads = _physical_grads(mesh, basis, rule.points)  # (T, Q, nk, 2)
    # vol[t, i, j, x] = int_E phi_j d_x phi_i
    vol = np.einsum("q,t,tqix,qj->tijx", rule.weights, 2.0 * mesh.area, grads, phi)
    dofs = np.arange(mesh.n_triangles)[:, None] * nk + np.arange(nk)[None, :]
    out = []
    for comp in range(2):
        coo = _Coo(N)
        r = np.broadcast_to(dofs[:, :, None], vol.shape[:3]).ravel()
        c = np.broadcast_to(dofs[:, None, :], vol.shape[:3]).ravel()
        coo.rows.append(r)
        coo.cols.append(c)
        coo.vals.append(vol[..., comp].ravel())
        for e in range(mesh.n_edges):
            w, t1, t2, phi1, phi2 = _edge_traces(mesh, basis, erule, e)
            n = mesh.edge_normal[e, comp]
            if t2 < 0:
                coo.add(dofs[t1], dofs[t1], -n * np.einsum("q,qi,qj->ij", w, phi1, phi1))
                continue
            sides = ((t1, phi1, 1.0), (t2, phi2, -1.0))
            for tv, pv, jump_sign in sides:
                for tt, pt, _ in sides:
                    blk = -0.5 * n * jump_sign * np.einsum("q,qi,qj->ij", w, pv, pt)
                    coo.add(dofs[tv], dofs[tt], blk)
        out.append(coo.tocsr())
    return out[0], out[1]


def _jump_matrix(mesh, basis, edges, weight, n_edge):
    erule = _edge_rule(basis, n_edge)
    nk = basis.dim
    coo = _Coo(mesh.n_triangles * nk)
    dofs = np.arange(mesh.n_triangles)[:, None] * nk + np.arange(nk)[None, :]
    for e in edges:
        w, t1, t2, phi1, phi2 = _edge_traces(mesh, basis, erule, e)
        if t2 < 0:
            jump, d = phi1, dofs[t1]
        else:
            jump, d = np.concatenate([phi1, -phi2], axis=1), np.concatenate([dofs[t1], dofs[t2]])
        coo.add(d, d, weight * np.einsum("q,qi,qj->ij", w, jump, jump))
    return coo.tocsr()


def assemble_penalties(
    mesh: Mesh,
    basis: ReferenceBasis,
    params: PenaltyParams,
    n_edge: int | None = None,
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """``D`` (eps1-weighted jumps of u over all edges) and ``Epen`` (eps2-weighted
    jumps of one sigma component over interior edges)."""
    eps1, eps2 = params.resolve(mesh.h)
    D = _jump_matrix(mesh, basis, range(mesh.n_edges), eps1, n_edge)
    Epen = _jump_matrix(mesh, basis, mesh.interior_edges, eps2, n_edge)
    return D, Epen


def assemble_load(mesh: Mesh, basis: ReferenceBasis, f, t: float, rule: QuadratureRule | None = None) -> np.ndarray:
    """Vector of ``int_E f(x, y, t) phi_i``; ``f`` must accept numpy arrays."""
    rule = rule or volume_rule(basis)
    phi = basis.values(rule.points)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None, :, :])
    fv = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1], t), dtype=float), pts.shape[:2])
    loc = np.einsum("q,tq,qi->ti", rule.weights, fv, phi) * (2.0 * mesh.area)[:, None]
    return loc.ravel()


@dataclass(eq=False)
class BlockSystem:
    mesh: Mesh
    basis: ReferenceBasis
    layout: DofLayout
    M: sp.csr_matrix
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    D: sp.csr_matrix
    Epen: sp.csr_matrix
    Bx: sp.csr_matrix
    By: sp.csr_matrix
    dt: float
    rule: QuadratureRule
    A: sp.csc_matrix = field(init=False)
    _lu: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        M, Z = self.M, None
        self.A = sp.bmat(
            [
                [M / self.dt + self.D, self.Gx, self.Gy, Z, Z],
                [Z, M, Z, -self.Bx, Z],
                [Z, Z, M, Z, -self.By],
                [-self.Gx.T, self.Epen, Z, M, Z],
                [-self.Gy.T, Z, self.Epen, Z, M],
            ],
            format="csc",
        )

    def block(self, row: str, col: str) -> sp.csr_matrix:
        return self.A[self.layout.slice(row), :][:, self.layout.slice(col)].tocsr()

    def seminorm(self, state_vec) -> float:
        """``d(u,u) + c(I p, p) + e(sigma, sigma)`` for a packed state vector."""
        f = self.layout.split(state_vec)
        return float(
            f["u"] @ (self.D @ f["u"])
            + f["p_x"] @ (self.Bx @ f["p_x"])
            + f["p_y"] @ (self.By @ f["p_y"])
            + f["sigma_x"] @ (self.Epen @ f["sigma_x"])
            + f["sigma_y"] @ (self.Epen @ f["sigma_y"])
        )


def _as_csr(B):
    return B.matrix if hasattr(B, "matrix") else sp.csr_matrix(B)


def compose_system(
    mesh: Mesh,
    basis: ReferenceBasis,
    M,
    G,
    D,
    Epen,
    Bx,
    By,
    dt: float,
    rule: QuadratureRule | None = None,
) -> BlockSystem:
    """Stack the blocks into the coupled operator for step size ``dt``.

    ``G`` is the pair ``(Gx, Gy)``; ``Bx``/``By`` may be coupling-matrix
    objects or plain sparse matrices.
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0.0):
        raise ValidationError(f"time step must be positive and finite, got {dt}")
    layout = DofLayout(mesh.n_triangles, basis.dim)
    Gx, Gy = G
    blocks = [M, Gx, Gy, D, Epen, _as_csr(Bx), _as_csr(By)]
    for b in blocks:
        if b.shape != (layout.block, layout.block):
            raise ValidationError(f"block of shape {b.shape} does not match {layout.block} dofs per field")
    M, Gx, Gy, D, Epen, Bx, By = (sp.csr_matrix(b) for b in blocks)
    return BlockSystem(mesh, basis, layout, M, Gx, Gy, D, Epen, Bx, By, float(dt), rule or volume_rule(basis))
