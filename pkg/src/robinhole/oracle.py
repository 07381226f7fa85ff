"""Closed-form reference solutions on concentric spheres.

The annulus problem (unit outer ball, hole of radius eps, constant data,
linear flux law) and the radial reduction of the limiting system have exact
solutions in every dimension n >= 3; these are the oracles the boundary
element pipeline is validated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import EpsOutOfRange, NoBracketFound, RadiusOutOfRange
from .potential import sphere_area
from .system import NonlinearityDescriptor

BRACKET_CAP = 1e6


def annulus_solution(n: int, a: float, b: float, delta_eps: float,
                     rho_eps: float, eps: float, r: float) -> float:
    """Radial solution value of the annulus problem at radius r.

    u(r) = a r^(2-n)/(2-n) + (a - b eps^(n-1)/rho + a delta eps/(n-2))
           / (delta eps^(n-1)).
    """
    if n < 3:
        raise ValueError("dimension must be >= 3")
    if not (eps <= r <= 1.0):
        raise RadiusOutOfRange(f"r={r} outside [{eps}, 1]")
    const = (a - b * eps ** (n - 1) / rho_eps + a * delta_eps * eps / (n - 2))
    return a * r ** (2 - n) / (2 - n) + const / (delta_eps * eps ** (n - 1))


def annulus_energy(n: int, a: float, eps: float) -> float:
    """Dirichlet energy of the annulus solution: a^2 s_n (1 - eps^(n-2)) / ((n-2) eps^(n-2))."""
    if n < 3:
        raise ValueError("dimension must be >= 3")
    if not (0.0 < eps < 1.0):
        raise EpsOutOfRange(f"eps={eps} outside (0, 1)")
    return a * a * sphere_area(n) / (n - 2) * (1.0 - eps ** (n - 2)) / eps ** (n - 2)


def linear_limit_xi(n: int, a: float, b: float, d0: float, r0: float) -> float:
    """Limit constant for the linear flux law: a - b r0 + a d0/(n-2)."""
    if n < 3:
        raise ValueError("dimension must be >= 3")
    return a - b * r0 + a * d0 / (n - 2)


@dataclass
class RadialRoot:
    xi: float
    mu_i_const: float
    converged: bool


def radial_limit_root(n: int, a: float, b: float, d0: float, r0: float,
                      F: NonlinearityDescriptor, eta0: float) -> RadialRoot:
    """Scalar reduction of the limiting system on concentric unit spheres.

    The compatibility condition forces the inner density to the constant a;
    the remaining scalar equation a = F(xi - a d0/(n-2), eta0) + b r0 is
    solved by bracketed bisection (geometric bracket growth) plus Brent.
    """
    if n < 3:
        raise ValueError("dimension must be >= 3")

    def g(xi: float) -> float:
        return F.value(xi - a * d0 / (n - 2), eta0) + b * r0 - a

    radius = 1.0
    while radius <= BRACKET_CAP:
        lo, hi = -radius, radius
        if g(lo) == 0.0:
            return RadialRoot(lo, a, True)
        if g(hi) == 0.0:
            return RadialRoot(hi, a, True)
        if np.sign(g(lo)) != np.sign(g(hi)):
            xi = brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)
            return RadialRoot(float(xi), a, True)
        radius *= 2.0
    raise NoBracketFound(
        f"no sign change of the radial equation within |xi| <= {BRACKET_CAP:g}")
