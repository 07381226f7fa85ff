"""Solution reconstruction, limit fields, boundary-flux energy, scaling fits.

A solved triple at eps represents u = (outer layer) + (inner layer at scale
eps) + xi/(delta(eps) eps^2).  Evaluators keep the additive constant separate
so the small-eps blowup never contaminates the layer sums; the energy comes
from boundary fluxes via the jump relations, with the constant's two flux
terms cancelled analytically and their numerical mismatch guarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (EnergyCancellationError, InsideInnerDomain,
                     InsufficientSamples, NonPositiveValue, OutsideDomain,
                     TooCloseToOrigin, TooCloseToSurface)
from .geometry import radial_at
from .system import ProblemData, UnknownTriple, operators

FOUR_PI = 4.0 * math.pi


@dataclass(eq=False)
class SolutionFields:
    """A solved triple at a given eps, ready for point evaluation."""

    triple: UnknownTriple
    eps: float
    data: ProblemData

    def __post_init__(self):
        if not np.isfinite(self.xi_scaled):
            raise ValueError("xi_scaled is not finite")

    @property
    def xi_scaled(self) -> float:
        """xi / (delta(eps) eps^2), from the power laws in closed form."""
        return self.triple.xi * self.data.family.xi_to_constant(self.eps)


@dataclass(eq=False)
class LimitFields:
    """The limit root, viewed as macroscopic and microscopic fields."""

    triple: UnknownTriple
    data: ProblemData


def _layer_sum(surface, values: np.ndarray, x: np.ndarray, scale: float = 1.0) -> float:
    """Plain quadrature of the single layer with unit-scale measure."""
    nodes = surface.nodes * scale
    d = np.linalg.norm(nodes - x[None, :], axis=1)
    return float(np.sum(surface.weights * values * (-1.0 / (FOUR_PI * d))))


def _min_dist(surface, x: np.ndarray, scale: float = 1.0) -> float:
    return float(np.linalg.norm(surface.nodes * scale - x[None, :], axis=1).min())


def eval_u(f: SolutionFields, x) -> float:
    """Value of u(eps, .) at a point of the perforated domain.

    Plain layer sums plus the additive constant; the point must keep one
    average node spacing from either boundary.
    """
    x = np.asarray(x, dtype=float)
    d = f.data
    r = np.linalg.norm(x)
    dir_ = x / r if r > 0 else np.array([0.0, 0.0, 1.0])
    if r >= radial_at(d.outer, dir_)[0]:
        raise OutsideDomain(f"|x|={r:.3g} outside the outer boundary")
    if r <= f.eps * radial_at(d.inner, dir_)[0]:
        raise OutsideDomain(f"|x|={r:.3g} inside the scaled hole")
    if _min_dist(d.outer, x) < d.outer.node_spacing:
        raise TooCloseToSurface("point within one node spacing of the outer boundary")
    if _min_dist(d.inner, x, f.eps) < f.eps * d.inner.node_spacing:
        raise TooCloseToSurface("point within one node spacing of the hole boundary")
    return (_layer_sum(d.outer, f.triple.mu_o.values, x)
            + _layer_sum(d.inner, f.triple.mu_i.values, x, f.eps)
            + f.xi_scaled)


def eval_u_rescaled(f: SolutionFields, t) -> float:
    """u(eps, eps t) through the rescaled decomposition.

    The outer-layer term (a factor eps^(n-2) in the microscopic field) and
    the unit-scale inner layer are evaluated separately, which stays stable
    as eps -> 0.
    """
    t = np.asarray(t, dtype=float)
    d = f.data
    rt = np.linalg.norm(t)
    dir_ = t / rt if rt > 0 else np.array([0.0, 0.0, 1.0])
    if rt <= radial_at(d.inner, dir_)[0]:
        raise OutsideDomain(f"|t|={rt:.3g} not exterior to the hole shape")
    if f.eps * rt >= radial_at(d.outer, dir_)[0]:
        raise OutsideDomain(f"eps*t outside the outer boundary")
    outer_term = _layer_sum(d.outer, f.triple.mu_o.values, f.eps * t)
    inner_term = _layer_sum(d.inner, f.triple.mu_i.values, t) / f.eps
    return outer_term + inner_term + f.xi_scaled


def macroscopic_limit(lf: LimitFields, x) -> float:
    """Macroscopic limit field: outer layer of the limit root plus the
    total-charge monopole S_3(x) * (integral of g_o)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r < 1e-8 * lf.data.outer.min_radius():
        raise TooCloseToOrigin("macroscopic field undefined at the origin")
    total_g = float(np.sum(lf.data.outer.weights * lf.data.g_o.values))
    return (_layer_sum(lf.data.outer, lf.triple.mu_o.values, x)
            - total_g / (FOUR_PI * r))


def microscopic_limit(lf: LimitFields, t) -> float:
    """Microscopic limit field: inner layer of the limit root, exterior to the hole."""
    t = np.asarray(t, dtype=float)
    rt = np.linalg.norm(t)
    dir_ = t / rt if rt > 0 else np.array([0.0, 0.0, 1.0])
    if rt <= radial_at(lf.data.inner, dir_)[0]:
        raise InsideInnerDomain(f"|t|={rt:.3g} inside the hole shape")
    return _layer_sum(lf.data.inner, lf.triple.mu_i.values, t)


def boundary_flux_terms(f: SolutionFields):
    """Pointwise boundary values and fluxes of u - xi_scaled from the layers.

    Returns (u_outer, dnu_outer, u_inner_rescaled, flux_inner) at the outer
    and inner collocation nodes; fluxes come from the jump relations, never
    finite differences.  flux_inner is nu . grad u at the scaled hole from
    the domain side, which carries a 1/eps^2 from the inner layer.
    """
    d, eps, tr = f.data, f.eps, f.triple
    ops = operators(d)
    A_oi, B_io, P_io, V_oi = ops.cross(eps)
    mo, mi = tr.mu_o.values, tr.mu_i.values
    u_o = ops.V_oo @ mo + V_oi @ mi
    dnu_o = -0.5 * mo + ops.W_oo @ mo + A_oi @ mi
    u_i = P_io @ mo + (ops.V_ii @ mi) / eps
    flux_i = B_io @ mo + (0.5 * mi + ops.W_ii @ mi) / eps ** 2
    return u_o, dnu_o, u_i, flux_i


def energy(f: SolutionFields, cancel_tol: float = 1e-6) -> float:
    """Dirichlet energy of u over the perforated domain by boundary fluxes.

    The additive constant xi_scaled pairs with the net boundary flux, which
    vanishes analytically; the two flux totals are compared and must agree
    to cancel_tol relative to the flux scale, else the dominant-constant
    cancellation is deemed lost and an error is raised.
    """
    d, eps = f.data, f.eps
    u_o, dnu_o, u_i, flux_i = boundary_flux_terms(f)
    w_o, w_i = d.outer.weights, d.inner.weights

    outer_total = float(np.sum(w_o * dnu_o))
    inner_total = eps ** 2 * float(np.sum(w_i * flux_i))
    flux_scale = float(np.sum(w_o * np.abs(dnu_o)) + eps ** 2 * np.sum(w_i * np.abs(flux_i)))
    if flux_scale > 0.0 and abs(outer_total - inner_total) > cancel_tol * flux_scale:
        raise EnergyCancellationError(
            f"net boundary flux {outer_total - inner_total:.3e} exceeds "
            f"{cancel_tol:g} x flux scale {flux_scale:.3e}; the additive "
            f"constant xi_scaled={f.xi_scaled:.3e} would not cancel")
    return float(np.sum(w_o * u_o * dnu_o) - eps ** 2 * np.sum(w_i * u_i * flux_i))


def scaled_energy(f: SolutionFields) -> float:
    """eps^(n-2) times the energy (n = 3), the quantity with a finite limit."""
    return f.eps * energy(f)


def default_probes(data: ProblemData) -> np.ndarray:
    """Five fixed probe points on the sphere of half the outer inradius."""
    r = 0.5 * data.outer.min_radius()
    dirs = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                     [0.0, 0.0, 1.0], [1.0, 1.0, 1.0] / np.sqrt(3.0)])
    return r * dirs


def fit_scaling(samples) -> dict:
    """Least-squares slope of log(value) against log(eps).

    Needs at least 4 strictly positive samples whose eps span a decade.
    Returns {"slope": ..., "r2": ...}.
    """
    samples = [(float(e), float(v)) for e, v in samples]
    if len(samples) < 4:
        raise InsufficientSamples(f"need >= 4 samples, got {len(samples)}")
    eps = np.array([e for e, _ in samples])
    val = np.array([v for _, v in samples])
    if np.any(eps <= 0.0):
        raise NonPositiveValue("eps values must be positive")
    if np.any(val <= 0.0):
        raise NonPositiveValue("sample values must be positive")
    if eps.max() / eps.min() < 10.0:
        raise InsufficientSamples(
            f"eps range {eps.min():g}..{eps.max():g} spans less than a decade")
    x, y = np.log(eps), np.log(val)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "r2": r2}
