"""Left Riemann-Liouville fractional integrals of broken polynomials.

The coupling matrix for direction ``x`` is

    B[(E, i), (F, j)] = int_E phi_i(x, y) * I_x^mu[phi_j 1_F](x, y) dx dy

with ``I_x^mu`` the left fractional integral from the lower domain edge.
Along each ray the double integral is evaluated in closed form (power rule
after Taylor-shifting the polynomial traces); only the transverse direction
is integrated numerically, on Gauss lines graded towards the row ends.
Each line contributes an exact, nonnegative quadratic form, so the
symmetric part of ``B`` is positive semidefinite up to rounding.
"""
from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .basis import ReferenceBasis
from .errors import ValidationError
from .mesh import Mesh, locate_points, ray_segment_arrays
from .quadrature import graded_unit_rule, interval_quadrature

log = logging.getLogger(__name__)

__all__ = [
    "FractionalOrders",
    "FracCouplingMatrix",
    "frac_integral_pointwise",
    "assemble_frac_coupling_matrix",
    "save_coupling_matrix",
    "load_coupling_matrix",
    "cache_path",
]

CACHE_MAGIC = "frachdg-bmat"


@dataclass(frozen=True)
class FractionalOrders:
    """Derivative orders ``alpha, beta`` in (1, 2) and integral orders ``2 - alpha, 2 - beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if not 1.0 < v < 2.0:
                raise ValidationError(f"{name} must lie in (1, 2), got {v}")

    @property
    def alpha1(self) -> float:
        return 2.0 - self.alpha

    @property
    def alpha2(self) -> float:
        return 2.0 - self.beta


def _check_mu(mu):
    if not 0.0 < mu < 1.0:
        raise ValidationError(f"fractional integral order must lie in (0, 1), got {mu}")


def _line_points(axis, along, transverse):
    along = np.asarray(along, dtype=float)
    t = np.broadcast_to(transverse, along.shape)
    if axis == "x":
        return np.stack([along, t], axis=-1)
    return np.stack([t, along], axis=-1)


def frac_integral_pointwise(
    mesh: Mesh,
    basis: ReferenceBasis,
    coeffs,
    mu: float,
    axis: str,
    point,
    n_singular: int = 4,
    n_smooth: int = 8,
) -> float:
    """``I^mu`` of the broken field ``coeffs`` (shape ``(T, dim)``) at ``point``.

    Segments within one segment-length of the evaluation point are handled
    with the Gauss-Jacobi rule for the weight ``(x_g - xi)^(mu-1)`` (as a
    difference of two integrals ending at ``x_g``), which is exact for the
    polynomial traces when ``2 * n_singular - 1 >= degree``.  Remote segments
    use Gauss-Legendre with the kernel evaluated pointwise.
    """
    _check_mu(mu)
    coeffs = np.asarray(coeffs, dtype=float).reshape(mesh.n_triangles, basis.dim)
    point = np.asarray(point, dtype=float)
    if locate_points(mesh, point[None, :])[0][0] < 0:
        raise ValidationError(f"point {point.tolist()} is outside the domain")
    k = 0 if axis == "x" else 1
    xg, trans = point[k], point[1 - k]
    tri, lo, hi = ray_segment_arrays(mesh, axis, trans, xg)
    if len(tri) == 0:
        return 0.0
    jac = interval_quadrature("jacobi", n_singular, (0.0, 1.0), mu)
    leg = interval_quadrature("legendre", n_smooth, (0.0, 1.0))
    total = 0.0
    for t, a, b in zip(tri, lo, hi):
        c = coeffs[t]
        if xg - b <= b - a:
            val = 0.0
            for start, sign in ((a, 1.0), (b, -1.0)):
                span = xg - start
                if span <= 0.0:
                    continue
                xi = start + span * jac.points
                ref = mesh.to_reference(np.full(len(xi), t), _line_points(axis, xi, trans))
                f = basis.values(ref) @ c
                val += sign * span**mu * np.dot(jac.weights, f)
        else:
            xi = a + (b - a) * leg.points
            ref = mesh.to_reference(np.full(len(xi), t), _line_points(axis, xi, trans))
            f = basis.values(ref) @ c
            val = (b - a) * np.dot(leg.weights, f * (xg - xi) ** (mu - 1.0))
        total += val
    return total / math.gamma(mu)


@dataclass(frozen=True, eq=False)
class FracCouplingMatrix:
    """Assembled ``B`` for one direction.

    ``packed[E, i, l, j]`` holds the entry for column triangle number ``l``
    within the cell row (``axis="x"``) or cell column (``axis="y"``) of
    ``E``, in upstream order; ``matrix`` is the same data in CSR form.
    """

    direction: str
    order: float
    packed: np.ndarray
    matrix: sp.csr_matrix

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self):
        return self.matrix.toarray()


def _band_columns(mesh, axis):
    """Global triangle ids of the packed band for every triangle, ``(T, 2n)``."""
    T = mesh.n_triangles
    cell = np.arange(T) // 2
    ci, cj = cell % mesh.nx, cell // mesh.nx
    if axis == "x":
        n = mesh.nx
        cells = cj[:, None] * mesh.nx + np.arange(n)[None, :]
    else:
        n = mesh.ny
        cells = np.arange(n)[None, :] * mesh.nx + ci[:, None]
    if axis == "x":
        order = np.stack([2 * cells + 1, 2 * cells], axis=-1)  # upper-left first
    else:
        order = np.stack([2 * cells, 2 * cells + 1], axis=-1)  # lower-right first
    return order.reshape(T, 2 * n)


def _local_band_index(mesh, axis, tri):
    cell = tri // 2
    upper = tri % 2
    if axis == "x":
        pos = cell % mesh.nx
        return 2 * pos + (1 - upper)
    pos = cell // mesh.nx
    return 2 * pos + upper


def _taylor_matrix(k, h):
    s = h * np.arange(k + 1)
    return np.linalg.inv(np.vander(s, k + 1, increasing=True))


def _element_block(mesh, basis, mu, axis, E, lines, taylor_inv, gamma_ratio):
    """Packed row block ``(dim, 2n, dim)`` of target triangle ``E``.

    Every line across ``E`` meets the same upstream triangles in the same
    order, so all lines are processed together (leading axis ``L``).
    """
    k = basis.degree
    nk = basis.dim
    ci, cj = mesh.cell_of(E)
    if axis == "x":
        t0, th, n, step = mesh.domain.c + cj * mesh.hy, mesh.hy, mesh.nx, mesh.hx
    else:
        t0, th, n, step = mesh.domain.a + ci * mesh.hx, mesh.hx, mesh.ny, mesh.hy
    trans = t0 + th * lines.points
    wts = th * lines.weights
    segs = [ray_segment_arrays(mesh, axis, t, _chord_end(mesh, axis, E, t)) for t in trans]
    tri = segs[0][0]
    if any(len(s[0]) != len(tri) or np.any(s[0] != tri) for s in segs) or tri[-1] != E:
        raise AssertionError(f"ray bookkeeping failed for triangle {E}")
    lo = np.stack([s[1] for s in segs])  # (L, S)
    hi = np.stack([s[2] for s in segs])
    nup = len(tri) - 1
    x0, x1 = lo[:, -1], hi[:, -1]
    cen = np.concatenate([x0[:, None], lo[:, :nup], hi[:, :nup]], axis=1)  # (L, C)
    sgn = np.concatenate([[1.0], np.ones(nup), -np.ones(nup)])
    src = np.concatenate([[E], tri[:nup], tri[:nup]])
    offsets = step * np.arange(k + 1)
    along = cen[:, :, None] + offsets  # (L, C, k+1)
    pts = _line_points(axis, along, trans[:, None, None])
    vq = basis.values(mesh.to_reference(np.broadcast_to(src[None, :, None], along.shape), pts))
    vp = basis.values(mesh.to_reference(np.full(along.shape, E), pts))
    q = np.einsum("nm,lcmj->lcnj", taylor_inv, vq)
    p = np.einsum("nm,lcmi->lcni", taylor_inv, vp)
    m = np.arange(k + 1)
    nu = mu + m[:, None] + m[None, :] + 1.0  # (source power, target power)
    d0 = np.maximum(x0[:, None] - cen, 0.0)[..., None, None]
    d1 = (x1[:, None] - cen)[..., None, None]
    chord = (x1 - x0)[:, None, None, None]
    pos = d0 > 0.0
    safe = np.where(pos, d0, 1.0)
    diff = np.where(
        pos,
        safe**nu * np.expm1(nu * np.log1p(chord / safe)),
        np.maximum(d1, 0.0) ** nu,
    )
    A = diff / nu * gamma_ratio[:, None]  # (L, C, m, n)
    D = np.einsum("l,c,lcmj,lcmn,lcni->cij", wts, sgn, q, A, p)
    block = np.zeros((nk, 2 * n, nk))
    loc = _local_band_index(mesh, axis, src)
    np.add.at(block, (slice(None), loc), np.transpose(D, (1, 0, 2)))
    return block


def _chord_end(mesh, axis, E, trans):
    """Downstream end of triangle ``E``'s chord on the line ``trans``."""
    ci, cj = mesh.cell_of(E)
    upper = E % 2 == 1
    dom = mesh.domain
    if axis == "x":
        frac = (trans - dom.c) / mesh.hy - cj
        left = dom.a + ci * mesh.hx
        return left + frac * mesh.hx if upper else left + mesh.hx
    frac = (trans - dom.a) / mesh.hx - ci
    bottom = dom.c + cj * mesh.hy
    return bottom + mesh.hy if upper else bottom + frac * mesh.hy


def assemble_frac_coupling_matrix(
    mesh: Mesh,
    basis: ReferenceBasis,
    mu: float,
    axis: str,
    n_lines: int = 16,
    workers: int = 1,
) -> FracCouplingMatrix:
    """Assemble ``B`` for ``I^mu`` along ``axis``.

    ``n_lines`` is the number of graded Gauss lines across each element's
    transverse extent.  ``workers > 1`` assembles target elements on a
    thread pool; every element block is written by one worker only.
    """
    _check_mu(mu)
    if axis not in ("x", "y"):
        raise ValidationError(f"axis must be 'x' or 'y', got {axis!r}")
    lines = graded_unit_rule(n_lines)
    k = basis.degree
    step = mesh.hx if axis == "x" else mesh.hy
    taylor_inv = _taylor_matrix(k, step)
    gamma_ratio = np.array([math.gamma(m + 1) / math.gamma(m + 1 + mu) for m in range(k + 1)])
    T, nk = mesh.n_triangles, basis.dim
    n = mesh.nx if axis == "x" else mesh.ny

    def work(E):
        return _element_block(mesh, basis, mu, axis, E, lines, taylor_inv, gamma_ratio)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(work, range(T)))
    else:
        blocks = [work(E) for E in range(T)]
    packed = np.stack(blocks)  # (T, nk, 2n, nk)
    return _from_packed(mesh, nk, axis, mu, packed)


def _from_packed(mesh, nk, axis, mu, packed):
    T = mesh.n_triangles
    n2 = packed.shape[2]
    cols_tri = _band_columns(mesh, axis)  # (T, 2n)
    rows = np.broadcast_to(
        (np.arange(T)[:, None] * nk + np.arange(nk)[None, :])[:, :, None, None],
        packed.shape,
    )
    cols = np.broadcast_to(
        (cols_tri[:, :, None] * nk + np.arange(nk)[None, None, :])[:, None, :, :],
        packed.shape,
    )
    nz = packed != 0.0
    mat = sp.csr_matrix(
        (packed[nz], (rows[nz], cols[nz])), shape=(T * nk, T * nk)
    )
    assert n2 == cols_tri.shape[1]
    return FracCouplingMatrix(axis, float(mu), packed, mat)


def cache_path(directory, mesh: Mesh, degree: int, mu: float, axis: str, n_lines: int) -> Path:
    key = f"{mesh.fingerprint}-k{degree}-mu{mu:.12g}-{axis}-l{n_lines}"
    return Path(directory) / f"bmat-{key}.bin"


def save_coupling_matrix(B: FracCouplingMatrix, path) -> None:
    """Header line, then little-endian float64 packed rows."""
    rows = B.packed.shape[0] * B.packed.shape[1]
    with open(path, "wb") as fh:
        fh.write(f"{CACHE_MAGIC} v1 {B.order!r} {B.direction} {rows}\n".encode())
        fh.write(np.ascontiguousarray(B.packed, dtype="<f8").tobytes())


def load_coupling_matrix(path, mesh: Mesh, basis: ReferenceBasis) -> FracCouplingMatrix:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        if len(header) != 5 or header[0] != CACHE_MAGIC or header[1] != "v1":
            raise ValidationError(f"{path}: not a coupling-matrix cache file")
        mu, axis, rows = float(header[2]), header[3], int(header[4])
        data = np.frombuffer(fh.read(), dtype="<f8")
    nk = basis.dim
    n = mesh.nx if axis == "x" else mesh.ny
    if rows != mesh.n_triangles * nk or data.size != rows * 2 * n * nk:
        raise ValidationError(f"{path}: size does not match the mesh")
    packed = data.reshape(mesh.n_triangles, nk, 2 * n, nk).copy()
    return _from_packed(mesh, nk, axis, mu, packed)
