"""Smooth closed surfaces in R^3 with tensor-product spherical quadrature.

Surfaces are radial graphs over the unit sphere, r(theta, phi) = r0 + sum of
real spherical-harmonic perturbations, discretized on a Gauss-Legendre grid in
cos(theta) times a uniform trapezoid grid in phi.  Everything downstream
(nodes, outward normals, area weights, local patch geometry for singular
quadrature) derives from the radial function and its surface gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import lpmv

from .errors import InvalidOrder, NonPositiveEps, NonPositiveRadius

MAX_HARMONIC_DEGREE = 8
MIN_ORDER = 4

SURFACE_KINDS = ("unit-sphere", "scaled-sphere", "star-shaped")


def _lm_norm(l: int, m: int) -> float:
    m = abs(m)
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))


def real_sph_harm(l: int, m: int, z, phi):
    """Real spherical harmonic Y_lm at cos(theta) = z, azimuth phi.

    Orthonormal on the unit sphere; m > 0 pairs with sqrt(2) cos(m phi),
    m < 0 with sqrt(2) sin(|m| phi).
    """
    z = np.asarray(z, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    p = lpmv(am, l, z)
    if m > 0:
        trig = math.sqrt(2.0) * np.cos(m * phi)
    elif m < 0:
        trig = math.sqrt(2.0) * np.sin(am * phi)
    else:
        trig = np.ones_like(phi)
    return _lm_norm(l, m) * p * trig


@dataclass(frozen=True)
class SurfaceSpec:
    """Shape description: sphere of given radius plus harmonic radial bumps.

    ``harmonics`` is a tuple of (l, m, coefficient) triples; the radial
    function is r(theta, phi) = radius + sum c_lm Y_lm(theta, phi).
    """

    kind: str
    radius: float = 1.0
    harmonics: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if not self.radius > 0.0:
            raise NonPositiveRadius(f"radius must be positive, got {self.radius}")
        if self.kind == "unit-sphere" and self.radius != 1.0:
            raise ValueError("unit-sphere has radius 1; use scaled-sphere")
        if self.kind in ("unit-sphere", "scaled-sphere") and self.harmonics:
            raise ValueError(f"{self.kind} takes no harmonic coefficients")
        for l, m, _ in self.harmonics:
            if not (0 <= l <= MAX_HARMONIC_DEGREE):
                raise ValueError(f"harmonic degree l={l} outside [0, {MAX_HARMONIC_DEGREE}]")
            if abs(m) > l:
                raise ValueError(f"harmonic order m={m} exceeds degree l={l}")

    @classmethod
    def unit_sphere(cls) -> "SurfaceSpec":
        return cls("unit-sphere")

    @classmethod
    def scaled_sphere(cls, radius: float) -> "SurfaceSpec":
        return cls("scaled-sphere", radius=radius)

    @classmethod
    def star_shaped(cls, harmonics, radius: float = 1.0) -> "SurfaceSpec":
        return cls("star-shaped", radius=radius, harmonics=tuple(tuple(h) for h in harmonics))


def _radial_terms(spec: SurfaceSpec, z: np.ndarray, phi: np.ndarray):
    """Radial function r and its surface gradient components at directions.

    Returns (r, dr/dtheta, (1/sin theta) dr/dphi) as arrays shaped like z.
    The phi component is computed through P_l^m / sin(theta), which stays
    bounded for m >= 1, so directions near the coordinate poles are safe.
    """
    z = np.asarray(z, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r = np.full_like(z, float(spec.radius))
    dr_dt = np.zeros_like(z)
    dr_dp_os = np.zeros_like(z)
    if not spec.harmonics:
        return r, dr_dt, dr_dp_os

    sin_t = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    sin_safe = np.clip(sin_t, 1e-300, None)
    for l, m, c in spec.harmonics:
        am = abs(m)
        norm = _lm_norm(l, m)
        p = lpmv(am, l, z)
        p_lower = lpmv(am, l - 1, z) if l - 1 >= am else np.zeros_like(z)
        # (1 - z^2) dP/dz = (l+m) P_{l-1}^m - l z P_l^m, so
        # dP/dtheta = -((l+m) P_{l-1}^m - l z P_l^m) / sin(theta).
        dp_dt = -((l + am) * p_lower - l * z * p) / sin_safe
        if m > 0:
            trig = math.sqrt(2.0) * np.cos(m * phi)
            dtrig = -math.sqrt(2.0) * m * np.sin(m * phi)
        elif m < 0:
            trig = math.sqrt(2.0) * np.sin(am * phi)
            dtrig = math.sqrt(2.0) * am * np.cos(am * phi)
        else:
            trig = np.ones_like(phi)
            dtrig = None
        r += c * norm * p * trig
        dr_dt += c * norm * dp_dt * trig
        if dtrig is not None:
            dr_dp_os += c * norm * (p / sin_safe) * dtrig
    return r, dr_dt, dr_dp_os


@dataclass(eq=False)
class Surface:
    """Quadrature discretization of a closed surface.

    Node k corresponds to grid indices (i, j) with k = i * n_phi + j, where i
    indexes the Gauss-Legendre colatitude rings (theta ascending) and j the
    uniform azimuth grid.  Immutable by convention; safe to share.
    """

    nodes: np.ndarray          # (N, 3)
    normals: np.ndarray        # (N, 3), outward unit vectors
    weights: np.ndarray        # (N,), area element x quadrature weight
    theta: np.ndarray          # (n_theta,), ascending
    phi: np.ndarray            # (n_phi,), uniform in [0, 2 pi)
    z_rings: np.ndarray        # cos(theta), descending
    gl_weights: np.ndarray     # Gauss-Legendre weights matching z_rings
    spec: SurfaceSpec = field(repr=False, default=None)
    scale: float = 1.0

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def n_phi(self) -> int:
        return self.phi.size

    @property
    def param(self) -> np.ndarray:
        """(N, 2) array of (theta index, phi index) backing each node."""
        i = np.repeat(np.arange(self.n_theta), self.n_phi)
        j = np.tile(np.arange(self.n_phi), self.n_theta)
        return np.stack([i, j], axis=1)

    @property
    def directions(self) -> np.ndarray:
        """Unit radial directions of the nodes (parameter-sphere points)."""
        n = np.linalg.norm(self.nodes, axis=1, keepdims=True)
        return self.nodes / n

    @property
    def node_spacing(self) -> float:
        """Average inter-node distance, sqrt(total area / node count)."""
        return math.sqrt(self.weights.sum() / self.n_nodes)

    def min_radius(self) -> float:
        return float(np.linalg.norm(self.nodes, axis=1).min())

    def max_radius(self) -> float:
        return float(np.linalg.norm(self.nodes, axis=1).max())


def build_surface(spec: SurfaceSpec, order: int) -> Surface:
    """Discretize a surface on an order x 2*order tensor grid.

    Gauss-Legendre in cos(theta) with ``order`` rings, uniform trapezoid in
    phi with ``2 * order`` points; weights carry the full area Jacobian
    r * sqrt(r^2 + |grad r|^2) of the radial parameterization.
    """
    if order < MIN_ORDER:
        raise InvalidOrder(f"order must be >= {MIN_ORDER}, got {order}")
    zs, glw = leggauss(order)
    zs, glw = zs[::-1].copy(), glw[::-1].copy()   # theta ascending
    theta = np.arccos(zs)
    n_phi = 2 * order
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi

    zz = np.repeat(zs, n_phi)
    pp = np.tile(phi, order)
    r, dr_dt, dr_dp_os = _radial_terms(spec, zz, pp)
    if r.min() <= 0.0:
        raise NonPositiveRadius(
            f"radial function reaches {r.min():.3g} <= 0 on the quadrature grid")

    sin_t = np.sqrt(np.clip(1.0 - zz * zz, 0.0, None))
    cos_p, sin_p = np.cos(pp), np.sin(pp)
    s_hat = np.stack([sin_t * cos_p, sin_t * sin_p, zz], axis=1)
    t_hat = np.stack([zz * cos_p, zz * sin_p, -sin_t], axis=1)
    p_hat = np.stack([-sin_p, cos_p, np.zeros_like(pp)], axis=1)

    grad = dr_dt[:, None] * t_hat + dr_dp_os[:, None] * p_hat
    den = np.sqrt(r * r + np.sum(grad * grad, axis=1))
    nodes = r[:, None] * s_hat
    normals = (r[:, None] * s_hat - grad) / den[:, None]
    weights = r * den * np.repeat(glw, n_phi) * (2.0 * math.pi / n_phi)

    return Surface(nodes=nodes, normals=normals, weights=weights,
                   theta=theta, phi=phi, z_rings=zs, gl_weights=glw,
                   spec=spec, scale=1.0)


def rescale_surface(s: Surface, eps: float) -> Surface:
    """Dilate a surface by eps: nodes scale, normals persist, weights pick eps^2."""
    if not eps > 0.0:
        raise NonPositiveEps(f"eps must be positive, got {eps}")
    return Surface(nodes=s.nodes * eps, normals=s.normals,
                   weights=s.weights * eps * eps,
                   theta=s.theta, phi=s.phi, z_rings=s.z_rings,
                   gl_weights=s.gl_weights, spec=s.spec, scale=s.scale * eps)


def interior_point(s: Surface) -> np.ndarray:
    """A point strictly inside the surface; the origin for star-shaped shapes."""
    return np.zeros(3)


def surface_frame(surface: Surface, dirs: np.ndarray):
    """Surface points, outward normals and area factor at unit directions.

    For directions s on the parameter sphere returns (points, normals, G)
    where the area element is G * dA with dA the solid-angle measure, i.e.
    G = scale^2 * r * sqrt(r^2 + |grad r|^2).  Used by the singular-patch
    quadrature, which needs geometry at off-grid directions.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    r, dr_dt, dr_dp_os = _radial_terms(surface.spec, z, phi)

    sin_t = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    cos_p, sin_p = np.cos(phi), np.sin(phi)
    t_hat = np.stack([z * cos_p, z * sin_p, -sin_t], axis=1)
    p_hat = np.stack([-sin_p, cos_p, np.zeros_like(phi)], axis=1)
    grad = dr_dt[:, None] * t_hat + dr_dp_os[:, None] * p_hat
    den = np.sqrt(r * r + np.sum(grad * grad, axis=1))

    points = surface.scale * r[:, None] * dirs
    normals = (r[:, None] * dirs - grad) / den[:, None]
    area_factor = surface.scale ** 2 * r * den
    return points, normals, area_factor


def radial_at(surface: Surface, dirs: np.ndarray) -> np.ndarray:
    """Scaled radial distance of the surface along unit directions."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    r, _, _ = _radial_terms(surface.spec, z, phi)
    return surface.scale * r
