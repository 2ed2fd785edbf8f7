"""Nodal Lagrange bases on the reference triangle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = ["ReferenceBasis", "eval_basis", "reference_nodes"]


def reference_nodes(k: int) -> np.ndarray:
    """Interpolation nodes for P^k, vertices first (so P^1 is barycentric)."""
    if k == 0:
        return np.array([[1 / 3, 1 / 3]])
    if k == 1:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if k == 2:
        return np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
        )
    raise ValidationError(f"polynomial degree must be 0, 1 or 2, got {k}")


def _exponents(k):
    return [(i, d - i) for d in range(k + 1) for i in range(d, -1, -1)]


@dataclass(frozen=True)
class ReferenceBasis:
    """Lagrange basis of degree ``k`` with ``(k+1)(k+2)/2`` functions."""

    degree: int
    nodes: np.ndarray = field(init=False, repr=False)
    _coef: np.ndarray = field(init=False, repr=False)
    _exps: tuple = field(init=False, repr=False)

    def __post_init__(self):
        nodes = reference_nodes(self.degree)
        exps = tuple(_exponents(self.degree))
        vander = np.array([[x**i * y**j for (i, j) in exps] for x, y in nodes])
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_exps", exps)
        object.__setattr__(self, "_coef", np.linalg.inv(vander))

    @property
    def dim(self) -> int:
        return len(self._exps)

    def _monomials(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([x**i * y**j for (i, j) in self._exps], axis=-1)

    def _monomial_grads(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        dx = [i * x ** max(i - 1, 0) * y**j if i else np.zeros_like(x) for (i, j) in self._exps]
        dy = [j * x**i * y ** max(j - 1, 0) if j else np.zeros_like(x) for (i, j) in self._exps]
        return np.stack([np.stack(dx, -1), np.stack(dy, -1)], axis=-1)

    def values(self, pts) -> np.ndarray:
        """Basis values, shape ``pts.shape[:-1] + (dim,)``."""
        pts = np.asarray(pts, dtype=float)
        return self._monomials(pts) @ self._coef

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape ``pts.shape[:-1] + (dim, 2)``."""
        pts = np.asarray(pts, dtype=float)
        g = self._monomial_grads(pts)  # (..., nmono, 2)
        return np.einsum("...md,mi->...id", g, self._coef)


def eval_basis(basis: ReferenceBasis, points) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(npts, dim)`` and reference gradients ``(npts, dim, 2)``.

    Physical gradients are ``grad_ref @ inv(J)`` for the element map
    ``x = v0 + J xi``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return basis.values(pts), basis.gradients(pts)
