"""Manufactured solutions ``u = exp(-t) X(x) Y(y)`` on the unit square.

Fractional derivatives of the polynomial factors come from the power rule
``D^a x^p = Gamma(p+1) / Gamma(p+1-a) x^(p-a)`` with base point 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ValidationError
from .fracop import FractionalOrders
from .mesh import Domain

__all__ = [
    "Poly1D",
    "VelocityField",
    "ManufacturedProblem",
    "rl_derivative_polynomial",
    "exact_eval",
    "forcing_eval",
    "example51",
    "example52",
    "get_problem",
]


@dataclass(frozen=True)
class Poly1D:
    """Polynomial with coefficients for ``x^0 .. x^p``."""

    coef: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.trim_zeros(np.asarray(self.coef, dtype=float), "b")) or (0.0,)
        if len(c) - 1 > 12:
            raise ValidationError(f"degree {len(c) - 1} exceeds 12")
        object.__setattr__(self, "coef", c)

    @classmethod
    def from_roots(cls, roots) -> "Poly1D":
        return cls(tuple(P.polyfromroots(roots)))

    @property
    def degree(self) -> int:
        return len(self.coef) - 1

    def __mul__(self, other: "Poly1D") -> "Poly1D":
        return Poly1D(tuple(P.polymul(self.coef, other.coef)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c in reversed(self.coef):
            out = out * x + c
        return out

    def deriv(self, m: int = 1) -> "Poly1D":
        return Poly1D(tuple(P.polyder(self.coef, m)) or (0.0,))


def rl_derivative_polynomial(poly: Poly1D, alpha: float, x):
    """Left Riemann-Liouville derivative of order ``alpha`` in (1, 2), base 0."""
    if not 1.0 < alpha < 2.0:
        raise ValidationError(f"order must lie in (1, 2), got {alpha}")
    powers = [p for p, c in enumerate(poly.coef) if c != 0.0]
    if any(p < 2 for p in powers):
        raise ValidationError("power rule needs every monomial power >= 2")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for p in powers:
        out = out + poly.coef[p] * math.gamma(p + 1) / math.gamma(p + 1 - alpha) * x ** (p - alpha)
    return out


@dataclass(frozen=True)
class VelocityField:
    """Convection field ``b(x, y, t)``; ``func`` returns ``(bx, by)``."""

    func: Callable
    name: str = "b"

    def __call__(self, x, y, t):
        bx, by = self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float), t)
        return np.broadcast_to(bx, np.shape(x)), np.broadcast_to(by, np.shape(y))

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


ZERO_VELOCITY = VelocityField(lambda x, y, t: (0.0 * x, 0.0 * y), "zero")


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    X: Poly1D
    Y: Poly1D
    velocity: VelocityField
    orders: FractionalOrders
    domain: Domain = Domain()
    forcing_on: bool = True
    initial_scale: float = 1.0

    def with_orders(self, alpha: float, beta: float) -> "ManufacturedProblem":
        return replace(self, orders=FractionalOrders(alpha, beta))

    def homogeneous(self, zero_velocity: bool = True, zero_initial: bool = False) -> "ManufacturedProblem":
        """Variant with ``f = 0`` (and optionally ``b = 0`` / ``u0 = 0``)."""
        return replace(
            self,
            forcing_on=False,
            velocity=ZERO_VELOCITY if zero_velocity else self.velocity,
            initial_scale=0.0 if zero_initial else self.initial_scale,
        )

    def initial(self, x, y):
        return self.initial_scale * self.X(x) * self.Y(y)

    def forcing(self, x, y, t):
        if not self.forcing_on:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return forcing_eval(self, x, y, t)


def exact_eval(problem: ManufacturedProblem, x, y, t):
    """Exact ``u`` and ``(u_x, u_y)``."""
    e = math.exp(-t)
    X, Y = problem.X, problem.Y
    u = e * X(x) * Y(y)
    return u, (e * X.deriv()(x) * Y(y), e * X(x) * Y.deriv()(y))


def forcing_eval(problem: ManufacturedProblem, x, y, t):
    """``f = u_t + b . grad u - D^alpha_x u - D^beta_y u`` for the exact ``u``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = math.exp(-t)
    X, Y, o = problem.X, problem.Y, problem.orders
    u, (ux, uy) = exact_eval(problem, x, y, t)
    f = -u
    if not problem.velocity.is_zero:
        bx, by = problem.velocity(x, y, t)
        f = f + bx * ux + by * uy
    f = f - e * Y(y) * rl_derivative_polynomial(X, o.alpha, x)
    f = f - e * X(x) * rl_derivative_polynomial(Y, o.beta, y)
    return f


def example51(alpha: float = 1.2, beta: float = 1.4) -> ManufacturedProblem:
    """``x^2 (x-1)^2 y^2 (y-1)^2 exp(-t)`` with no convection."""
    X = Poly1D.from_roots([0, 0, 1, 1])
    return ManufacturedProblem("example51", X, X, ZERO_VELOCITY, FractionalOrders(alpha, beta))


def _saddle(x, y, t):
    return x - 0.5, -(y - 0.5)


def example52(alpha: float = 1.2, beta: float = 1.4) -> ManufacturedProblem:
    """Four hills ``x^2 (x-.5)^2 (x-1)^2 ...`` advected by a saddle flow."""
    X = Poly1D.from_roots([0, 0, 0.5, 0.5, 1, 1])
    return ManufacturedProblem(
        "example52", X, X, VelocityField(_saddle, "saddle"), FractionalOrders(alpha, beta)
    )


PROBLEMS = {"example51": example51, "example52": example52}


def get_problem(name: str, alpha: float, beta: float) -> ManufacturedProblem:
    try:
        return PROBLEMS[name](alpha, beta)
    except KeyError:
        raise ValidationError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
