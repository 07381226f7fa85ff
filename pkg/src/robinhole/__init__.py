"""Boundary-integral solver and eps-sweep harness for Laplace problems with a
small hole carrying a (possibly degenerating) nonlinear Robin condition."""

from . import errors
from .fields import (LimitFields, SolutionFields, default_probes, energy,
                     eval_u, eval_u_rescaled, fit_scaling, macroscopic_limit,
                     microscopic_limit, scaled_energy)
from .geometry import (Surface, SurfaceSpec, build_surface, interior_point,
                       real_sph_harm, rescale_surface)
from .oracle import (annulus_energy, annulus_solution, linear_limit_xi,
                     radial_limit_root)
from .potential import (Density, OperatorBlock, adjoint_double_layer,
                        cross_block, fundamental_solution,
                        grad_fundamental_solution, jump_check, sphere_area,
                        single_layer_near, single_layer_offsurface,
                        single_layer_onsurface)
from .system import (EpsFamily, NonlinearityDescriptor, PowerLaw, ProblemData,
                     UnknownTriple, jacobian, mean_residual, residual_eps,
                     residual_limit, solvability_check, solve_at_eps,
                     solve_limit)

__all__ = [
    "errors",
    "Surface", "SurfaceSpec", "build_surface", "rescale_surface",
    "interior_point", "real_sph_harm",
    "Density", "OperatorBlock", "fundamental_solution",
    "grad_fundamental_solution", "sphere_area", "single_layer_onsurface",
    "single_layer_offsurface", "single_layer_near", "adjoint_double_layer",
    "cross_block", "jump_check",
    "NonlinearityDescriptor", "PowerLaw", "EpsFamily", "ProblemData",
    "UnknownTriple", "residual_eps", "residual_limit", "jacobian",
    "mean_residual", "solve_limit", "solve_at_eps", "solvability_check",
    "SolutionFields", "LimitFields", "eval_u", "eval_u_rescaled",
    "macroscopic_limit", "microscopic_limit", "energy", "scaled_energy",
    "fit_scaling", "default_probes",
    "annulus_solution", "annulus_energy", "linear_limit_xi",
    "radial_limit_root",
]
