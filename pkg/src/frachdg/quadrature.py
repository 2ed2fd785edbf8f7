"""Quadrature rules on intervals and on the reference triangle.

Jacobi rules come from the Golub-Welsch eigenvalue method applied to the
three-term recurrence of the monic Jacobi polynomials.  The reference
triangle is ``{(xi, eta): xi, eta >= 0, xi + eta <= 1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ValidationError

__all__ = [
    "QuadratureRule",
    "gauss_jacobi",
    "interval_quadrature",
    "triangle_quadrature",
    "graded_unit_rule",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Points, positive weights and the polynomial exactness degree.

    For 1D rules ``points`` has shape ``(n,)``; on the triangle ``(n, 2)``.
    Weights already contain any weight function of the rule.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def gauss_jacobi(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int_{-1}^{1} f(x) (1-x)^a (1+x)^b dx``."""
    if n < 1:
        raise ValidationError(f"need at least one node, got n={n}")
    if a <= -1.0 or b <= -1.0:
        raise ValidationError(f"Jacobi exponents must exceed -1, got a={a}, b={b}")
    ab = a + b
    k = np.arange(n, dtype=float)
    diag = np.empty(n)
    diag[0] = (b - a) / (ab + 2.0)
    if n > 1:
        kk = k[1:]
        diag[1:] = (b * b - a * a) / ((2 * kk + ab) * (2 * kk + ab + 2))
    kk = np.arange(1, n, dtype=float)
    beta = (
        4 * kk * (kk + a) * (kk + b) * (kk + ab)
        / ((2 * kk + ab) ** 2 * (2 * kk + ab + 1) * (2 * kk + ab - 1))
    )
    mu0 = 2.0 ** (ab + 1) * math.gamma(a + 1) * math.gamma(b + 1) / math.gamma(ab + 2)
    if n == 1:
        return diag.copy(), np.array([mu0])
    nodes, vecs = eigh_tridiagonal(diag, np.sqrt(beta))
    weights = mu0 * vecs[0, :] ** 2
    return nodes, weights


def interval_quadrature(kind: str, n: int, interval=(0.0, 1.0), mu: float | None = None) -> QuadratureRule:
    """Gauss rule on ``[lo, hi]``.

    ``kind="legendre"`` integrates polynomials of degree ``2n-1`` exactly.
    ``kind="jacobi"`` absorbs the weight ``(hi - x)**(mu - 1)`` with
    ``0 < mu < 1`` into the weights, so that ``sum(w * f(x))`` equals
    ``int f(x) (hi - x)^(mu-1) dx`` exactly for polynomial ``f`` of degree
    ``2n-1``.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValidationError(f"empty interval [{lo}, {hi}]")
    half = 0.5 * (hi - lo)
    if kind == "legendre":
        x, w = np.polynomial.legendre.leggauss(n) if n >= 1 else (None, None)
        if x is None:
            raise ValidationError(f"need at least one node, got n={n}")
        return QuadratureRule(lo + (x + 1.0) * half, w * half, 2 * n - 1)
    if kind == "jacobi":
        if mu is None or not 0.0 < mu < 1.0:
            raise ValidationError(f"jacobi rule needs 0 < mu < 1, got mu={mu}")
        expo = mu - 1.0
        x, w = gauss_jacobi(n, expo, 0.0)
        return QuadratureRule(lo + (x + 1.0) * half, w * half ** (expo + 1.0), 2 * n - 1)
    raise ValidationError(f"unknown interval rule kind {kind!r}")


# 3-point rule exact for quadratics; interior points, equal weights.
_DEG2_POINTS = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])


def triangle_quadrature(degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle exact to ``degree``.

    Degrees 1 and 2 use the centroid and the 3-point interior rules.  Higher
    degrees use the collapsed (Duffy) product of a Gauss-Jacobi rule with
    weight ``(1 - s)`` and a Gauss-Legendre rule.
    """
    if not 1 <= degree <= 20:
        raise ValidationError(f"triangle quadrature degree must be in [1, 20], got {degree}")
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree == 2:
        return QuadratureRule(_DEG2_POINTS.copy(), np.full(3, 1 / 6), 2)
    n = (degree + 2) // 2
    xs, ws = gauss_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = ws / 4.0  # d s and the (1-s) weight each contribute a factor 1/2
    xt, wt = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (xt + 1.0)
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    w = np.outer(ws, wt).ravel()
    return QuadratureRule(pts, w, degree)


def graded_unit_rule(n: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1] pulled through the quintic smoothstep.

    The map ``t = s^3 (10 - 15 s + 6 s^2)`` has vanishing first and second
    derivatives at both ends, which damps algebraic endpoint singularities
    of the integrand.  The declared degree is for polynomials in ``s`` only.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    t = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    dt = 30.0 * s * s * (1.0 - s) ** 2
    return QuadratureRule(t, w * dt, (2 * n - 1 - 4) // 5)
