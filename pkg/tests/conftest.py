import numpy as np
import pytest

from robinhole.geometry import SurfaceSpec, build_surface
from robinhole.potential import Density
from robinhole.system import (EpsFamily, NonlinearityDescriptor, PowerLaw,
                              ProblemData)

UNIT = SurfaceSpec.unit_sphere()
STAR20 = SurfaceSpec.star_shaped([(2, 0, 0.1)])


@pytest.fixture(scope="session")
def surface_factory():
    """Session-wide surface cache; sharing surfaces shares operator blocks."""
    cache = {}

    def get(spec: SurfaceSpec, order: int):
        key = (spec, order)
        if key not in cache:
            cache[key] = build_surface(spec, order)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def annulus_problem(surface_factory):
    """Concentric unit spheres, a = b = 1, delta = 1/eps, rho = eps^2."""
    cache = {}

    def get(order: int):
        if order not in cache:
            s = surface_factory(UNIT, order)
            fam = EpsFamily(PowerLaw(1.0, -1.0), PowerLaw(1.0, 2.0))
            cache[order] = ProblemData(s, s, Density.constant(s, 1.0),
                                       Density.constant(s, 1.0),
                                       NonlinearityDescriptor.linear(), fam)
        return cache[order]

    return get


@pytest.fixture(scope="session")
def cubic_problem(surface_factory):
    """Concentric unit spheres, power-3 flux law, a = 1, b = 0, d0 = r0 = 0, eta0 = 1."""
    cache = {}

    def get(order: int):
        if order not in cache:
            s = surface_factory(UNIT, order)
            fam = EpsFamily(PowerLaw(1.0, 0.0), PowerLaw(1.0, 0.0), PowerLaw(1.0, 0.0))
            cache[order] = ProblemData(s, s, Density.constant(s, 1.0),
                                       Density.constant(s, 0.0),
                                       NonlinearityDescriptor.power(3), fam)
        return cache[order]

    return get


@pytest.fixture(scope="session")
def star_problem(surface_factory):
    """Unit-sphere outer, star-shaped inner (c_20 = 0.1), mixed scalings."""
    cache = {}

    def get(order: int):
        if order not in cache:
            so = surface_factory(UNIT, order)
            st = surface_factory(STAR20, order)
            fam = EpsFamily(PowerLaw(0.3, -1.0), PowerLaw(2.0, 2.0))
            cache[order] = ProblemData(so, st, Density.constant(so, 1.0),
                                       Density.constant(st, 0.5),
                                       NonlinearityDescriptor.linear(), fam)
        return cache[order]

    return get


def band_limited(surface, rng, lmax=2, amp=0.5):
    """Random band-limited density, sup-normalized to amp."""
    from robinhole.geometry import real_sph_harm
    nrm = np.linalg.norm(surface.nodes, axis=1)
    z = surface.nodes[:, 2] / nrm
    ph = np.arctan2(surface.nodes[:, 1], surface.nodes[:, 0])
    mu = np.zeros(surface.n_nodes)
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            mu += rng.normal() * real_sph_harm(l, m, z, ph)
    mu *= amp / np.abs(mu).max()
    return Density(mu, surface)
