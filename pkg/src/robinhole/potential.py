"""Fundamental solution, single layer potential and adjoint double layer.

Self-interaction blocks use a partition-of-unity Nystrom rule: a zonal
polynomial cutoff splits each target's integral into a globally smooth far
part, summed with the native grid weights, and a local cap around the target
integrated in rotated polar coordinates (Gauss-Legendre in the polar angle
times trapezoid in azimuth), whose Jacobian cancels the O(1/|x-y|) kernel
singularity.  Densities at patch points come from tensor interpolation on the
grid: trigonometric in phi, local barycentric polynomial across theta rings.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (OriginEvaluation, SurfacesOverlap, TooCloseToSurface)
from .geometry import Surface, surface_frame

FOUR_PI = 4.0 * math.pi

# Cutoff cap: chi = 1 - smoothstep(t), t = (1 - cos beta)/(1 - cos BETA_MAX).
# The C^7 smoothstep keeps chi a degree-15 polynomial in cos beta, so the far
# integrand is smooth on the whole surface with a high-order contact at the
# target and at the cap rim.  The wide cap spreads the transition; the rim
# kink dominates the rule's error, so width buys accuracy directly.
BETA_MAX = 2.0
_T_DEN = 1.0 - math.cos(BETA_MAX)
STENCIL = 6


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def fundamental_solution(n: int, x) -> float:
    """Kernel value 1 / ((2-n) s_n |x|^(n-2)) for n >= 3."""
    if n < 3:
        raise ValueError("dimension must be >= 3")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise OriginEvaluation("fundamental solution evaluated at the origin")
    return 1.0 / ((2.0 - n) * sphere_area(n) * r ** (n - 2))


def grad_fundamental_solution(n: int, x) -> np.ndarray:
    """Gradient x / (s_n |x|^n) of the fundamental solution."""
    if n < 3:
        raise ValueError("dimension must be >= 3")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise OriginEvaluation("gradient evaluated at the origin")
    return x / (sphere_area(n) * r ** n)


@dataclass(eq=False)
class Density:
    """Nodal values of a surface density."""

    values: np.ndarray
    surface: Surface

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.surface.n_nodes,):
            raise ValueError(
                f"density has {self.values.shape} values for "
                f"{self.surface.n_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")

    @classmethod
    def constant(cls, surface: Surface, value: float) -> "Density":
        return cls(np.full(surface.n_nodes, float(value)), surface)


@dataclass(eq=False)
class OperatorBlock:
    """Dense Nystrom block mapping nodal density values to target values."""

    matrix: np.ndarray
    kind: str                     # "single-layer" | "adjoint-double-layer"
    source_surface: Surface
    target_surface: Surface
    source_scale: float = 1.0
    target_scale: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("operator block has non-finite entries")

    def apply(self, mu: Density) -> np.ndarray:
        return self.matrix @ mu.values


def _smoothstep7_half(t: np.ndarray) -> np.ndarray:
    return t ** 8 * (6435.0 + t * (-40040.0 + t * (108108.0 + t * (-163800.0 + t * (
        150150.0 + t * (-83160.0 + t * (25740.0 - t * 3432.0)))))))


def _smoothstep7(t: np.ndarray) -> np.ndarray:
    """Order-7 smoothstep: 0 at t<=0, 1 at t>=1, C^7 contacts.

    Evaluated on t <= 1/2 via the midpoint symmetry to avoid the alternating
    Horner cancellation of the raw polynomial near t = 1.
    """
    t = np.clip(t, 0.0, 1.0)
    low = _smoothstep7_half(np.minimum(t, 0.5))
    high = 1.0 - _smoothstep7_half(np.minimum(1.0 - t, 0.5))
    return np.where(t <= 0.5, low, high)


def _cutoff_from_cos(cos_beta: np.ndarray) -> np.ndarray:
    """Cap cutoff chi as a function of cos of the angular separation."""
    return 1.0 - _smoothstep7((1.0 - cos_beta) / _T_DEN)


def _patch_rule(order: int):
    n_rho = max(12, order)
    n_alpha = max(24, 2 * order)
    return n_rho, n_alpha


def _orthobasis(direction: np.ndarray):
    a = np.zeros(3)
    a[np.argmin(np.abs(direction))] = 1.0
    e1 = np.cross(direction, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)
    return e1, e2


def _barycentric_rows(grid: np.ndarray, x: np.ndarray, base: np.ndarray, width: int):
    """Lagrange interpolation weights on sliding stencils of a 1-d grid.

    Returns (len(x), width) weights for stencils grid[base + 0..width-1].
    """
    idx = base[:, None] + np.arange(width)[None, :]
    t = grid[idx]                                     # (M, width)
    bw = np.ones_like(t)
    for k in range(width):
        d = t - t[:, k:k + 1]
        d[:, k] = 1.0
        bw[:, k] = 1.0 / np.prod(d, axis=1)
    diff = x[:, None] - t
    exact = np.isclose(diff, 0.0, atol=1e-14)
    diff_safe = np.where(exact, 1.0, diff)
    w = bw / diff_safe
    w_sum = w.sum(axis=1, keepdims=True)
    rows = w / w_sum
    hit = exact.any(axis=1)
    if np.any(hit):
        rows[hit] = exact[hit].astype(float)
    return rows, idx


def _trig_rows(phi_grid: np.ndarray, phi_star: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation weights on the uniform periodic phi grid."""
    n = phi_grid.size                                  # even by construction
    d = phi_star[:, None] - phi_grid[None, :]
    # wrap into (-pi, pi]: the cardinal function is 2 pi periodic and the
    # formula below is ill-conditioned for |d| near 2 pi
    d = (d + math.pi) % (2.0 * math.pi) - math.pi
    half = 0.5 * d
    s = np.sin(half)
    tiny = np.abs(s) < 1e-14
    s_safe = np.where(tiny, 1.0, s)
    rows = np.sin(n * half) * np.cos(half) / (n * s_safe)
    rows = np.where(tiny, 1.0, rows)
    return rows


class _DensityInterp:
    """Tensor interpolation of nodal values at arbitrary directions."""

    def __init__(self, surface: Surface):
        self.surface = surface
        self.width = min(STENCIL, surface.n_theta)

    def rows(self, dirs: np.ndarray):
        """Interpolation stencil for unit directions.

        Returns (theta_rows (M, width), ring_base (M,), phi_rows (M, n_phi)).
        """
        s = self.surface
        z = np.clip(dirs[:, 2], -1.0, 1.0)
        theta_star = np.arccos(z)
        phi_star = np.arctan2(dirs[:, 1], dirs[:, 0]) % (2.0 * math.pi)
        base = np.searchsorted(s.theta, theta_star) - self.width // 2
        base = np.clip(base, 0, s.n_theta - self.width)
        t_rows, _ = _barycentric_rows(s.theta, theta_star, base, self.width)
        p_rows = _trig_rows(s.phi, phi_star)
        return t_rows, base, p_rows

    def evaluate(self, values: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        s = self.surface
        t_rows, base, p_rows = self.rows(dirs)
        grid = values.reshape(s.n_theta, s.n_phi)
        ring_vals = np.einsum("mj,mrj->mr", p_rows,
                              grid[base[:, None] + np.arange(self.width)[None, :]])
        return np.sum(t_rows * ring_vals, axis=1)


_SELF_BLOCK_CACHE: "weakref.WeakKeyDictionary[Surface, tuple]" = weakref.WeakKeyDictionary()


def _assemble_self_blocks(surface: Surface):
    """Single-layer and adjoint-double-layer self matrices in one pass."""
    nodes, normals, w = surface.nodes, surface.normals, surface.weights
    n = surface.n_nodes
    dirs = surface.directions

    # Far part: native rule on the smoothly cut kernel.
    cosb = np.clip(dirs @ dirs.T, -1.0, 1.0)
    fac = (1.0 - _cutoff_from_cos(cosb)) * w[None, :]
    np.fill_diagonal(fac, 0.0)
    diff = nodes[:, None, :] - nodes[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, 1.0)
    sl = fac * (-1.0 / (FOUR_PI * dist))
    nu_dot = np.einsum("ik,ijk->ij", normals, diff)
    adl = fac * nu_dot / (FOUR_PI * dist ** 3)

    # Near part: rotated polar patch, density interpolated from the grid.
    order = surface.n_theta
    n_rho, n_alpha = _patch_rule(order)
    xg, wg = np.polynomial.legendre.leggauss(n_rho)
    beta = 0.5 * BETA_MAX * (xg + 1.0)
    wbeta = 0.5 * BETA_MAX * wg
    alpha = 2.0 * math.pi * np.arange(n_alpha) / n_alpha
    walpha = 2.0 * math.pi / n_alpha
    cb, sb = np.cos(beta), np.sin(beta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    chi_patch = _cutoff_from_cos(cb)
    interp = _DensityInterp(surface)
    width = interp.width
    n_phi = surface.n_phi
    col_ids = np.arange(n_phi)[None, :]

    for i in range(n):
        e1, e2 = _orthobasis(dirs[i])
        # (n_rho, n_alpha, 3) patch directions, flattened
        pd = (cb[:, None, None] * dirs[i][None, None, :]
              + sb[:, None, None] * (ca[:, None] * e1[None, :] + sa[:, None] * e2[None, :])[None, :, :])
        pd = pd.reshape(-1, 3)
        pts, _, area = surface_frame(surface, pd)
        qw = (np.outer(wbeta * sb * chi_patch, np.full(n_alpha, walpha)).ravel() * area)
        d = nodes[i][None, :] - pts
        r = np.linalg.norm(d, axis=1)
        k_sl = -qw / (FOUR_PI * r)
        k_adl = qw * (d @ normals[i]) / (FOUR_PI * r ** 3)

        t_rows, base, p_rows = interp.rows(pd)
        flat_base = base * n_phi
        row_sl = np.zeros(n)
        row_adl = np.zeros(n)
        for scol in range(width):
            t_w = t_rows[:, scol]
            block = t_w[:, None] * p_rows
            flat = (flat_base + scol * n_phi)[:, None] + col_ids
            row_sl += np.bincount(flat.ravel(), weights=(k_sl[:, None] * block).ravel(),
                                  minlength=n)
            row_adl += np.bincount(flat.ravel(), weights=(k_adl[:, None] * block).ravel(),
                                   minlength=n)
        sl[i] += row_sl
        adl[i] += row_adl

    return sl, adl


def _self_blocks(surface: Surface):
    cached = _SELF_BLOCK_CACHE.get(surface)
    if cached is None:
        cached = _assemble_self_blocks(surface)
        _SELF_BLOCK_CACHE[surface] = cached
    return cached


def single_layer_onsurface(src: Surface) -> OperatorBlock:
    """Nystrom matrix of the on-surface single layer trace."""
    sl, _ = _self_blocks(src)
    return OperatorBlock(sl, "single-layer", src, src, src.scale, src.scale)


def adjoint_double_layer(src: Surface) -> OperatorBlock:
    """Nystrom matrix of W*, the normal-derivative boundary operator."""
    _, adl = _self_blocks(src)
    return OperatorBlock(adl, "adjoint-double-layer", src, src, src.scale, src.scale)


def separation_threshold(src: Surface, x: np.ndarray) -> float:
    """Plain-quadrature separation: 3x the local node spacing near x."""
    d = np.linalg.norm(src.nodes - np.asarray(x, dtype=float)[None, :], axis=1)
    k = int(np.argmin(d))
    return 3.0 * math.sqrt(src.weights[k])


def single_layer_offsurface(src: Surface, mu: Density, x) -> float:
    """Plain quadrature sum of the single layer at a well-separated point."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(src.nodes - x[None, :], axis=1)
    thr = separation_threshold(src, x)
    if d.min() < thr:
        raise TooCloseToSurface(
            f"distance {d.min():.3g} below separation threshold {thr:.3g}")
    return float(np.sum(src.weights * mu.values * (-1.0 / (FOUR_PI * d))))


def _potential_sum(src: Surface, values: np.ndarray, x: np.ndarray) -> float:
    d = np.linalg.norm(src.nodes - x[None, :], axis=1)
    return float(np.sum(src.weights * values * (-1.0 / (FOUR_PI * d))))


def cross_block(kind: str, src: Surface, src_scale: float,
                tgt: Surface, tgt_scale: float) -> OperatorBlock:
    """Smooth-kernel block between two disjoint scaled surfaces.

    Entries act on nodal densities with the *unit-scale* surface measure of
    the source; scaling enters only through the kernel arguments.  No epsilon
    prefactors are baked in.
    """
    if kind not in ("single-layer", "adjoint-double-layer"):
        raise ValueError(f"unknown block kind {kind!r}")
    s_nodes = src.nodes * src_scale
    t_nodes = tgt.nodes * tgt_scale
    diff = t_nodes[:, None, :] - s_nodes[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    gap = 0.5 * (math.sqrt(src.weights.max()) * src_scale
                 + math.sqrt(tgt.weights.max()) * tgt_scale)
    if dist.min() < gap:
        raise SurfacesOverlap(
            f"minimum surface separation {dist.min():.3g} below threshold {gap:.3g}")
    if kind == "single-layer":
        mat = src.weights[None, :] * (-1.0 / (FOUR_PI * dist))
    else:
        nu_dot = np.einsum("ik,ijk->ij", tgt.normals, diff)
        mat = src.weights[None, :] * nu_dot / (FOUR_PI * dist ** 3)
    return OperatorBlock(mat, kind, src, tgt, src_scale, tgt_scale)


def single_layer_near(src: Surface, mu: Density, x, *, center: int | None = None,
                      n_alpha: int = 48, n_gauss: int = 12) -> float:
    """Single layer at a point close to (or on) the surface.

    Same far/near splitting as the self blocks; the cap integral uses
    geometrically graded panels in the polar angle so the near-surface peak
    (scale = distance to the surface) is resolved.  Intended for
    finite-difference checks; slower than the plain sum.
    """
    x = np.asarray(x, dtype=float)
    dists = np.linalg.norm(src.nodes - x[None, :], axis=1)
    k = int(np.argmin(dists)) if center is None else int(center)
    c_dir = src.directions[k]

    cosb = np.clip(src.directions @ c_dir, -1.0, 1.0)
    fac = (1.0 - _cutoff_from_cos(cosb)) * src.weights * mu.values
    dist_safe = np.where(fac == 0.0, 1.0, dists)
    far = float(np.sum(fac * (-1.0 / (FOUR_PI * dist_safe))))

    # graded panel edges, finest at the kernel peak scale
    h0 = min(max(float(dists.min()) / max(src.scale, 1e-300), 1e-8), BETA_MAX / 8.0)
    edges = [0.0, h0]
    while edges[-1] < BETA_MAX:
        edges.append(min(edges[-1] * 2.5, BETA_MAX))
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    beta = np.concatenate([0.5 * (b - a) * (xg + 1.0) + a
                           for a, b in zip(edges[:-1], edges[1:])])
    wbeta = np.concatenate([0.5 * (b - a) * wg for a, b in zip(edges[:-1], edges[1:])])

    alpha = 2.0 * math.pi * np.arange(n_alpha) / n_alpha
    cb, sb = np.cos(beta), np.sin(beta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    e1, e2 = _orthobasis(c_dir)
    pd = (cb[:, None, None] * c_dir[None, None, :]
          + sb[:, None, None] * (ca[:, None] * e1[None, :] + sa[:, None] * e2[None, :])[None, :, :])
    pd = pd.reshape(-1, 3)
    pts, _, area = surface_frame(src, pd)
    chi = _cutoff_from_cos(cb)
    qw = np.outer(wbeta * sb * chi, np.full(n_alpha, 2.0 * math.pi / n_alpha)).ravel() * area
    r = np.linalg.norm(x[None, :] - pts, axis=1)
    mu_vals = _DensityInterp(src).evaluate(mu.values, pd)
    near = float(np.sum(qw * mu_vals * (-1.0 / (FOUR_PI * r))))
    return far + near


def jump_check(src: Surface, mu: Density, node_index: int, h: float,
               *, self_block: OperatorBlock | None = None):
    """One-sided FD normal derivatives of the single layer at a node.

    Returns (interior, exterior); their difference approximates the density
    jump.  The on-surface value is taken from the same near evaluator as the
    offset points, so its quadrature error cancels in the difference instead
    of being amplified by 1/h.  Used only in tests.
    """
    if not 0.0 < h < 0.2 * src.min_radius():
        raise TooCloseToSurface(
            f"offset h={h} must sit in (0, {0.2 * src.min_radius():.3g})")
    x = src.nodes[node_index]
    nu = src.normals[node_index]
    if self_block is not None:
        v0 = float(self_block.matrix[node_index] @ mu.values)
    else:
        v0 = single_layer_near(src, mu, x, center=node_index)
    v_out = single_layer_near(src, mu, x + h * nu, center=node_index)
    v_in = single_layer_near(src, mu, x - h * nu, center=node_index)
    return (v0 - v_in) / h, (v_out - v0) / h
