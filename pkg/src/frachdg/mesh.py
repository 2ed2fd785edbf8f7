"""Structured triangulations of a rectangle.

Each of the ``nx * ny`` cells is split along its lower-left to upper-right
diagonal.  Cell ``(i, j)`` (column ``i``, row ``j``) owns triangle
``2c`` = (v00, v10, v11), the lower-right half, and ``2c + 1`` =
(v00, v11, v01), the upper-left half, where ``c = j * nx + i``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

__all__ = [
    "Domain",
    "Edge",
    "Mesh",
    "RaySegment",
    "OUTSIDE",
    "build_mesh",
    "locate_point",
    "locate_points",
    "axis_ray_segments",
    "ray_segment_arrays",
    "write_mesh_dump",
]

OUTSIDE = None
_BARY_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    a: float = 0.0
    b: float = 1.0
    c: float = 0.0
    d: float = 1.0

    def __post_init__(self):
        if not (self.a < self.b and self.c < self.d):
            raise ValidationError(f"degenerate domain {self}")

    @property
    def area(self) -> float:
        return (self.b - self.a) * (self.d - self.c)


UNIT_SQUARE = Domain()


class Edge(NamedTuple):
    vertices: tuple
    length: float
    normal: tuple
    first: int
    second: int  # -1 on the boundary
    interior: bool


class RaySegment(NamedTuple):
    triangle: int
    lo: float
    hi: float
    transverse: float


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: Domain
    nx: int
    ny: int
    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    area: np.ndarray  # (T,)
    jac: np.ndarray  # (T, 2, 2), columns v1 - v0 and v2 - v0
    jac_inv: np.ndarray  # (T, 2, 2)
    edge_vertices: np.ndarray  # (E, 2)
    edge_length: np.ndarray  # (E,)
    edge_normal: np.ndarray  # (E, 2), oriented first -> second / outward
    edge_triangles: np.ndarray  # (E, 2), second = -1 on the boundary
    diameter: float
    _hash: str = field(default="", repr=False)

    @property
    def hx(self) -> float:
        return (self.domain.b - self.domain.a) / self.nx

    @property
    def hy(self) -> float:
        return (self.domain.d - self.domain.c) / self.ny

    @property
    def h(self) -> float:
        """Cell side length; this is the mesh size quoted in reports."""
        return max(self.hx, self.hy)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edge_length)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_triangles[:, 1] >= 0)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_triangles[:, 1] < 0)

    @property
    def origin(self) -> np.ndarray:
        return self.vertices[self.triangles[:, 0]]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def edges(self) -> list[Edge]:
        out = []
        for e in range(self.n_edges):
            t1, t2 = (int(v) for v in self.edge_triangles[e])
            out.append(
                Edge(
                    tuple(int(v) for v in self.edge_vertices[e]),
                    float(self.edge_length[e]),
                    tuple(float(v) for v in self.edge_normal[e]),
                    t1,
                    t2,
                    t2 >= 0,
                )
            )
        return out

    def cell_of(self, tri: int) -> tuple[int, int]:
        c = tri // 2
        return c % self.nx, c // self.nx

    def to_reference(self, tri, pts) -> np.ndarray:
        """Reference coordinates of physical ``pts`` under the map of ``tri``.

        ``tri`` and ``pts`` broadcast: ``tri`` of shape ``S`` and ``pts`` of
        shape ``S + (2,)``.
        """
        tri = np.asarray(tri)
        pts = np.asarray(pts, dtype=float)
        rel = pts - self.origin[tri]
        return np.einsum("...ij,...j->...i", self.jac_inv[tri], rel)

    def to_physical(self, tri, ref) -> np.ndarray:
        tri = np.asarray(tri)
        ref = np.asarray(ref, dtype=float)
        return self.origin[tri] + np.einsum("...ij,...j->...i", self.jac[tri], ref)

    @property
    def fingerprint(self) -> str:
        return self._hash


def build_mesh(nx: int, ny: int, domain: Domain = UNIT_SQUARE) -> Mesh:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValidationError(f"mesh needs positive integer nx, ny; got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(domain.a, domain.b, nx + 1)
    ys = np.linspace(domain.c, domain.d, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j holds y_j
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (jj * (nx + 1) + ii).ravel()
    v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    p = vertices[tris]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    area = 0.5 * det
    jac_inv = np.linalg.inv(jac)

    edge_index = {}
    ev, et = [], []
    for t, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            e = edge_index.get(key)
            if e is None:
                edge_index[key] = len(ev)
                ev.append((a, b))  # counterclockwise on the first triangle
                et.append([t, -1])
            else:
                et[e][1] = t
    ev = np.array(ev, dtype=np.int64)
    et = np.array(et, dtype=np.int64)
    tangent = vertices[ev[:, 1]] - vertices[ev[:, 0]]
    length = np.hypot(tangent[:, 0], tangent[:, 1])
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]

    diam = max(
        float(np.max(np.linalg.norm(p[:, i] - p[:, j], axis=1)))
        for i, j in ((0, 1), (1, 2), (2, 0))
    )
    digest = hashlib.sha1(
        repr((nx, ny, domain.a, domain.b, domain.c, domain.d)).encode()
    ).hexdigest()[:16]
    return Mesh(
        domain, nx, ny, vertices, tris, area, jac, jac_inv,
        ev, length, normal, et, diam, digest,
    )


def _barycentric(mesh, tri, pts):
    ref = mesh.to_reference(tri, pts)
    return np.stack([1.0 - ref[..., 0] - ref[..., 1], ref[..., 0], ref[..., 1]], axis=-1)


def locate_points(mesh: Mesh, pts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised point location.

    Returns triangle ids (``-1`` outside the closed domain) and barycentric
    coordinates.  Points on shared edges go to the smaller triangle id.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    dom = mesh.domain
    scale = max(dom.b - dom.a, dom.d - dom.c)
    tol = _BARY_TOL * scale
    inside = (
        (pts[:, 0] >= dom.a - tol) & (pts[:, 0] <= dom.b + tol)
        & (pts[:, 1] >= dom.c - tol) & (pts[:, 1] <= dom.d + tol)
    )
    fx = (pts[:, 0] - dom.a) / mesh.hx
    fy = (pts[:, 1] - dom.c) / mesh.hy
    eps = 1e-10
    i_lo = np.clip(np.floor(fx - eps), 0, mesh.nx - 1).astype(np.int64)
    i_hi = np.clip(np.floor(fx + eps), 0, mesh.nx - 1).astype(np.int64)
    j_lo = np.clip(np.floor(fy - eps), 0, mesh.ny - 1).astype(np.int64)
    j_hi = np.clip(np.floor(fy + eps), 0, mesh.ny - 1).astype(np.int64)
    cells = np.stack(
        [j_lo * mesh.nx + i_lo, j_lo * mesh.nx + i_hi, j_hi * mesh.nx + i_lo, j_hi * mesh.nx + i_hi],
        axis=1,
    )
    cand = np.sort(np.concatenate([2 * cells, 2 * cells + 1], axis=1), axis=1)
    bary = _barycentric(mesh, cand, np.broadcast_to(pts[:, None, :], cand.shape + (2,)))
    ok = bary.min(axis=-1) >= -1e-10
    first = np.argmax(ok, axis=1)
    found = ok[np.arange(len(pts)), first] & inside
    tri = np.where(found, cand[np.arange(len(pts)), first], -1)
    lam = bary[np.arange(len(pts)), first]
    lam = np.clip(lam, 0.0, 1.0)
    lam /= lam.sum(axis=1, keepdims=True)
    lam[~found] = np.nan
    return tri, lam


def locate_point(mesh: Mesh, p):
    """Containing triangle and barycentric coordinates, or ``OUTSIDE`` (None)."""
    tri, lam = locate_points(mesh, np.asarray(p, dtype=float)[None, :])
    if tri[0] < 0:
        return OUTSIDE
    return int(tri[0]), lam[0]


def _axis_geometry(mesh, axis):
    dom = mesh.domain
    if axis == "x":
        return dom.a, mesh.hx, mesh.nx, dom.c, mesh.hy, mesh.ny
    if axis == "y":
        return dom.c, mesh.hy, mesh.ny, dom.a, mesh.hx, mesh.nx
    raise ValidationError(f"axis must be 'x' or 'y', got {axis!r}")


def _nudged(mesh, axis, transverse):
    """Validate ``transverse`` and shift it by ``1e-13 h`` off a mesh line."""
    _, _, _, to, th, tn = _axis_geometry(mesh, axis)
    s = (transverse - to) / th
    if not 0.0 < s < tn:
        raise ValidationError(f"transverse coordinate {transverse} not strictly inside the domain")
    if abs(s - round(s)) < 1e-13:
        return transverse + 1e-13 * mesh.h
    return transverse


def ray_segment_arrays(mesh: Mesh, axis: str, transverse: float, endpoint: float):
    """Array form of :func:`axis_ray_segments`: ``(tri, lo, hi)``."""
    o, h, n, to, th, tn = _axis_geometry(mesh, axis)
    s = (_nudged(mesh, axis, transverse) - to) / th
    row = min(int(math.floor(s)), tn - 1)
    frac = s - row
    if endpoint <= o:
        empty = np.empty(0)
        return np.empty(0, dtype=np.int64), empty, empty
    ncell = min(int(math.ceil((endpoint - o) / h - 1e-12)), n)
    i = np.arange(max(ncell, 1))
    left = o + i * h
    mid = left + frac * h
    right = o + (i + 1) * h
    if axis == "x":
        cell = row * mesh.nx + i
        first, second = 2 * cell + 1, 2 * cell  # upper-left, then lower-right
    else:
        cell = i * mesh.nx + row
        first, second = 2 * cell, 2 * cell + 1  # lower-right, then upper-left
    tri = np.column_stack([first, second]).ravel()
    lo = np.column_stack([left, mid]).ravel()
    hi = np.column_stack([mid, right]).ravel()
    hi = np.minimum(hi, endpoint)
    keep = hi > lo
    return tri[keep], lo[keep], hi[keep]


def axis_ray_segments(mesh: Mesh, axis: str, transverse: float, endpoint: float) -> list[RaySegment]:
    """Split the ray from the domain's lower edge (along ``axis``) to
    ``endpoint`` into per-triangle pieces, ordered upstream to downstream."""
    tri, lo, hi = ray_segment_arrays(mesh, axis, transverse, endpoint)
    transverse = _nudged(mesh, axis, transverse)
    return [RaySegment(int(t), float(a), float(b), float(transverse)) for t, a, b in zip(tri, lo, hi)]


def write_mesh_dump(mesh: Mesh, path) -> None:
    """Plain-text dump: ``v x y``, ``t i j k`` and ``e i j class`` lines."""
    with open(path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")
        for (i, j), (_, t2) in zip(mesh.edge_vertices, mesh.edge_triangles):
            fh.write(f"e {i} {j} {'interior' if t2 >= 0 else 'boundary'}\n")
