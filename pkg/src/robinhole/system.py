"""The nonlinear integral system and its eps -> 0 limit.

Unknowns are a zero-mean density on the outer boundary, a density on the
unit-scale hole boundary and one scalar; the equations collocate the
Neumann/Robin conditions through the layer-potential jump relations, with one
appended weighted-mean row making the discrete system square.  Cross blocks
carry scaling only through kernel arguments; the closed-form gamma
substitutions keep small-eps assembly free of catastrophic cancellation.
"""

from __future__ import annotations

import math
import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigInvalid, NewtonDiverged, NonFiniteResidual,
                     SingularJacobian, SolvabilityWarning, SurfacesOverlap)
from .geometry import Surface
from .potential import (Density, adjoint_double_layer, cross_block,
                        single_layer_onsurface)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class NonlinearityDescriptor:
    """Flux law F(tau, eta): the identity or a power perturbation of it."""

    form: str                  # "linear" | "power-perturbation"
    m: int = 0

    def __post_init__(self):
        if self.form not in ("linear", "power-perturbation"):
            raise ValueError(f"unknown nonlinearity form {self.form!r}")
        if self.form == "power-perturbation" and self.m < 2:
            raise ValueError("power-perturbation requires m >= 2")

    def value(self, tau, eta):
        if self.form == "linear":
            return tau
        return tau + eta * np.asarray(tau) ** self.m

    def dtau(self, tau, eta):
        if self.form == "linear":
            return np.ones_like(np.asarray(tau, dtype=float))
        return 1.0 + self.m * eta * np.asarray(tau) ** (self.m - 1)

    @classmethod
    def linear(cls) -> "NonlinearityDescriptor":
        return cls("linear")

    @classmethod
    def power(cls, m: int) -> "NonlinearityDescriptor":
        return cls("power-perturbation", m)


@dataclass(frozen=True)
class PowerLaw:
    """c * eps**p."""

    coefficient: float
    exponent: float

    def __call__(self, eps: float) -> float:
        return self.coefficient * eps ** self.exponent


@dataclass(frozen=True)
class EpsFamily:
    """Power-law scalings delta, rho, eta and their eps -> 0 limits (n = 3).

    The limits d0 = lim eps*delta(eps), r0 = lim eps^(n-1)/rho(eps) and
    eta0 = lim eta(eps) must be finite; the admissible exponent ranges are
    validated at construction and the limits come out of the power laws in
    closed form, never from numeric limits.
    """

    delta: PowerLaw
    rho: PowerLaw
    eta: PowerLaw = PowerLaw(0.0, 0.0)

    def __post_init__(self):
        if self.delta.coefficient <= 0.0:
            raise ConfigInvalid("delta coefficient must be > 0")
        if self.rho.coefficient <= 0.0:
            raise ConfigInvalid("rho coefficient must be > 0")
        if self.delta.exponent < -1.0:
            raise ConfigInvalid(
                "delta exponent < -1 makes d0 = lim eps*delta(eps) infinite; "
                "it must be >= -1")
        if self.rho.exponent > 2.0:
            raise ConfigInvalid(
                "rho exponent > 2 makes r0 = lim eps^(n-1)/rho(eps) infinite "
                "for n = 3; it must be <= 2")
        if self.eta.coefficient != 0.0 and self.eta.exponent < 0.0:
            raise ConfigInvalid(
                "eta exponent < 0 makes eta0 = lim eta(eps) infinite; "
                "it must be >= 0")

    @property
    def d0(self) -> float:
        return self.delta.coefficient if self.delta.exponent == -1.0 else 0.0

    @property
    def r0(self) -> float:
        return 1.0 / self.rho.coefficient if self.rho.exponent == 2.0 else 0.0

    @property
    def eta0(self) -> float:
        return self.eta.coefficient if self.eta.exponent == 0.0 else 0.0

    def gamma1(self, eps: float) -> float:
        """eps * delta(eps), in closed form."""
        return self.delta.coefficient * eps ** (1.0 + self.delta.exponent)

    def gamma3(self, eps: float) -> float:
        """eps^(n-1) / rho(eps) for n = 3, in closed form."""
        return eps ** (2.0 - self.rho.exponent) / self.rho.coefficient

    def xi_to_constant(self, eps: float) -> float:
        """1 / (delta(eps) eps^(n-1)): converts xi to the additive constant."""
        return eps ** (-(2.0 + self.delta.exponent)) / self.delta.coefficient


@dataclass(eq=False)
class ProblemData:
    """Geometry, boundary data, flux law and scaling family of one problem."""

    outer: Surface
    inner: Surface
    g_o: Density
    g_i: Density
    F: NonlinearityDescriptor
    family: EpsFamily

    def __post_init__(self):
        if self.g_o.surface is not self.outer:
            raise ValueError("g_o must live on the outer surface")
        if self.g_i.surface is not self.inner:
            raise ValueError("g_i must live on the inner surface")

    @property
    def eps_bound(self) -> float:
        """Largest admissible eps: half the radial clearance ratio."""
        return 0.5 * self.outer.min_radius() / self.inner.max_radius()


@dataclass
class UnknownTriple:
    """(mu_o, mu_i, xi): the unknowns of the integral system."""

    mu_o: Density
    mu_i: Density
    xi: float

    @classmethod
    def zeros(cls, data: ProblemData) -> "UnknownTriple":
        return cls(Density.constant(data.outer, 0.0),
                   Density.constant(data.inner, 0.0), 0.0)

    def copy(self) -> "UnknownTriple":
        return UnknownTriple(Density(self.mu_o.values.copy(), self.mu_o.surface),
                             Density(self.mu_i.values.copy(), self.mu_i.surface),
                             self.xi)


def weighted_mean(mu: Density) -> float:
    w = mu.surface.weights
    return float(np.sum(w * mu.values) / np.sum(w))


def project_zero_mean(mu: Density) -> Density:
    return Density(mu.values - weighted_mean(mu), mu.surface)


class _Operators:
    """Per-problem operator blocks; self blocks once, cross blocks per eps."""

    def __init__(self, data: ProblemData):
        self.W_oo = adjoint_double_layer(data.outer).matrix
        self.V_oo = single_layer_onsurface(data.outer).matrix
        self.W_ii = adjoint_double_layer(data.inner).matrix
        self.V_ii = single_layer_onsurface(data.inner).matrix
        nodes = data.outer.nodes
        r = np.linalg.norm(nodes, axis=1)
        # nu(x) . grad S_3(x - 0), the limit of the outer cross kernel
        self.flux_origin = np.einsum("ij,ij->i", data.outer.normals,
                                     nodes) / (FOUR_PI * r ** 3)
        self._cross: dict[float, tuple] = {}
        self._data = data

    def cross(self, eps: float):
        hit = self._cross.get(eps)
        if hit is None:
            d = self._data
            A_oi = cross_block("adjoint-double-layer", d.inner, eps, d.outer, 1.0).matrix
            B_io = cross_block("adjoint-double-layer", d.outer, 1.0, d.inner, eps).matrix
            P_io = cross_block("single-layer", d.outer, 1.0, d.inner, eps).matrix
            V_oi = cross_block("single-layer", d.inner, eps, d.outer, 1.0).matrix
            hit = (A_oi, B_io, P_io, V_oi)
            if len(self._cross) > 64:
                self._cross.clear()
            self._cross[eps] = hit
        return hit


_OPERATOR_CACHE: "weakref.WeakKeyDictionary[ProblemData, _Operators]" = weakref.WeakKeyDictionary()


def operators(data: ProblemData) -> _Operators:
    ops = _OPERATOR_CACHE.get(data)
    if ops is None:
        ops = _Operators(data)
        _OPERATOR_CACHE[data] = ops
    return ops


def _check_eps(data: ProblemData, eps: float) -> None:
    if not eps > 0.0:
        raise SurfacesOverlap(f"eps must be positive, got {eps}")
    if eps >= data.eps_bound:
        raise SurfacesOverlap(
            f"eps={eps} at or beyond the admissible bound {data.eps_bound:.3g}")


def residual_eps(data: ProblemData, eps: float, u: UnknownTriple):
    """Pointwise residual densities of the eps-dependent system."""
    _check_eps(data, eps)
    ops = operators(data)
    A_oi, B_io, P_io, _ = ops.cross(eps)
    fam = data.family
    g1, g2, g3 = fam.gamma1(eps), fam.eta(eps), fam.gamma3(eps)
    mo, mi, xi = u.mu_o.values, u.mu_i.values, u.xi

    r_o = -0.5 * mo + ops.W_oo @ mo + A_oi @ mi - data.g_o.values
    tau = eps * g1 * (P_io @ mo) + g1 * (ops.V_ii @ mi) + xi
    r_i = (0.5 * mi + eps ** 2 * (B_io @ mo) + ops.W_ii @ mi
           - data.F.value(tau, g2) - g3 * data.g_i.values)
    if not (np.all(np.isfinite(r_o)) and np.all(np.isfinite(r_i))):
        raise NonFiniteResidual("residual contains NaN or infinity")
    return Density(r_o, data.outer), Density(r_i, data.inner)


def residual_limit(data: ProblemData, u: UnknownTriple):
    """Pointwise residual densities of the eps = 0 limiting system."""
    ops = operators(data)
    fam = data.family
    mo, mi, xi = u.mu_o.values, u.mu_i.values, u.xi

    total_inner = float(np.sum(data.inner.weights * mi))
    r_o = -0.5 * mo + ops.W_oo @ mo + ops.flux_origin * total_inner - data.g_o.values
    tau = fam.d0 * (ops.V_ii @ mi) + xi
    r_i = (0.5 * mi + ops.W_ii @ mi
           - data.F.value(tau, fam.eta0) - fam.r0 * data.g_i.values)
    if not (np.all(np.isfinite(r_o)) and np.all(np.isfinite(r_i))):
        raise NonFiniteResidual("residual contains NaN or infinity")
    return Density(r_o, data.outer), Density(r_i, data.inner)


def mean_residual(data: ProblemData, u: UnknownTriple) -> float:
    """Residual of the zero weighted-mean constraint on mu_o."""
    return weighted_mean(u.mu_o)


def _pack(data: ProblemData, r_o, r_i, mean: float) -> np.ndarray:
    return np.concatenate([r_o, r_i, [mean]])


def residual_vector(data: ProblemData, eps: float | None, u: UnknownTriple) -> np.ndarray:
    if eps is None:
        r_o, r_i = residual_limit(data, u)
    else:
        r_o, r_i = residual_eps(data, eps, u)
    return _pack(data, r_o.values, r_i.values, mean_residual(data, u))


def jacobian(data: ProblemData, eps: float | None, u: UnknownTriple) -> np.ndarray:
    """Analytic Jacobian on (mu_o, mu_i, xi), with the mean-constraint row.

    ``eps=None`` selects the limiting system.  Square of size
    N_o + N_i + 1; the flux-law derivative is closed form.
    """
    ops = operators(data)
    fam = data.family
    n_o, n_i = data.outer.n_nodes, data.inner.n_nodes
    mo, mi, xi = u.mu_o.values, u.mu_i.values, u.xi
    J = np.zeros((n_o + n_i + 1, n_o + n_i + 1))

    J_oo = -0.5 * np.eye(n_o) + ops.W_oo
    if eps is None:
        tau = fam.d0 * (ops.V_ii @ mi) + xi
        fp = data.F.dtau(tau, fam.eta0)
        J_oi = np.outer(ops.flux_origin, data.inner.weights)
        J_io = np.zeros((n_i, n_o))
        J_ii = 0.5 * np.eye(n_i) + ops.W_ii - fp[:, None] * (fam.d0 * ops.V_ii)
    else:
        _check_eps(data, eps)
        A_oi, B_io, P_io, _ = ops.cross(eps)
        g1, g2 = fam.gamma1(eps), fam.eta(eps)
        tau = eps * g1 * (P_io @ mo) + g1 * (ops.V_ii @ mi) + xi
        fp = data.F.dtau(tau, g2)
        J_oi = A_oi
        J_io = eps ** 2 * B_io - fp[:, None] * (eps * g1 * P_io)
        J_ii = 0.5 * np.eye(n_i) + ops.W_ii - fp[:, None] * (g1 * ops.V_ii)

    J[:n_o, :n_o] = J_oo
    J[:n_o, n_o:n_o + n_i] = J_oi
    J[n_o:n_o + n_i, :n_o] = J_io
    J[n_o:n_o + n_i, n_o:n_o + n_i] = J_ii
    J[n_o:n_o + n_i, -1] = -fp
    w_o = data.outer.weights
    J[-1, :n_o] = w_o / w_o.sum()
    return J


@dataclass
class NewtonInfo:
    iterations: int
    residual_norms: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else math.inf

    @property
    def convergence_ratios(self) -> list[float]:
        """log(r_{k+1}) / log(r_k); ~2 signals terminal quadratic convergence."""
        out = []
        for a, b in zip(self.residual_norms, self.residual_norms[1:]):
            if 0.0 < b < a < 1.0:
                out.append(math.log(b) / math.log(a))
        return out


def _newton(data: ProblemData, eps: float | None, init: UnknownTriple,
            tol: float, max_iter: int, line_search: bool):
    n_o = data.outer.n_nodes
    n_i = data.inner.n_nodes
    u = init.copy()
    u.mu_o = project_zero_mean(u.mu_o)
    info = NewtonInfo(iterations=0)

    def res(v: UnknownTriple) -> np.ndarray:
        return residual_vector(data, eps, v)

    r = res(u)
    for it in range(max_iter):
        rn = float(np.abs(r).max())
        info.residual_norms.append(rn)
        if rn < tol:
            info.converged = True
            info.iterations = it
            return u, info
        J = jacobian(data, eps, u)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        lam = 1.0
        while True:
            trial = UnknownTriple(
                Density(u.mu_o.values + lam * step[:n_o], data.outer),
                Density(u.mu_i.values + lam * step[n_o:n_o + n_i], data.inner),
                u.xi + lam * float(step[-1]))
            trial.mu_o = project_zero_mean(trial.mu_o)
            try:
                r_trial = res(trial)
            except NonFiniteResidual:
                r_trial = None
            if not line_search:
                break
            if r_trial is not None and np.abs(r_trial).max() <= (1.0 - 1e-4 * lam) * rn:
                break
            lam *= 0.5
            if lam < 1e-4:
                break
        if r_trial is None or not np.all(np.isfinite(r_trial)):
            raise NewtonDiverged(
                f"non-finite residual at iteration {it + 1}; log {info.residual_norms}")
        u, r = trial, r_trial
    rn = float(np.abs(r).max())
    info.residual_norms.append(rn)
    if rn < tol:
        info.converged = True
        info.iterations = max_iter
        return u, info
    raise NewtonDiverged(
        f"no convergence in {max_iter} iterations; residual log {info.residual_norms}")


@dataclass
class SolvabilityReport:
    integral_nonzero: bool
    sign_ok: bool
    integral_value: float = 0.0
    min_dtau: float = 0.0


def solvability_check(data: ProblemData, u_limit: UnknownTriple,
                      tol_check: float = 1e-8) -> SolvabilityReport:
    """Conditions for the limit root to anchor a solution branch.

    The flux-law derivative along the root must have nonzero surface
    integral, and must be nonnegative when d0 != 0.
    """
    ops = operators(data)
    fam = data.family
    tau = fam.d0 * (ops.V_ii @ u_limit.mu_i.values) + u_limit.xi
    fp = data.F.dtau(tau, fam.eta0)
    w = data.inner.weights
    integral = float(np.sum(w * fp))
    min_fp = float(fp.min())
    return SolvabilityReport(
        integral_nonzero=abs(integral) > tol_check * w.sum(),
        sign_ok=(fam.d0 == 0.0) or (min_fp >= -tol_check),
        integral_value=integral,
        min_dtau=min_fp)


def solve_limit(data: ProblemData, init: UnknownTriple | None = None, *,
                tol: float = 1e-10, max_iter: int = 50, line_search: bool = False,
                with_info: bool = False):
    """Newton root of the limiting system, with solvability post-check."""
    u0 = init if init is not None else UnknownTriple.zeros(data)
    u, info = _newton(data, None, u0, tol, max_iter, line_search)
    report = solvability_check(data, u)
    if not (report.integral_nonzero and report.sign_ok):
        warnings.warn(
            f"solvability conditions violated at the limit root: {report}",
            SolvabilityWarning)
    return (u, info) if with_info else u


def solve_at_eps(data: ProblemData, eps: float, init: UnknownTriple | None = None, *,
                 tol: float = 1e-10, max_iter: int = 50, line_search: bool = False,
                 with_info: bool = False):
    """Newton root of the eps-dependent system; warm start with the limit root."""
    _check_eps(data, eps)
    u0 = init if init is not None else solve_limit(data)
    u, info = _newton(data, eps, u0, tol, max_iter, line_search)
    return (u, info) if with_info else u
