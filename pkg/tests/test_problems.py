import numpy as np
import pytest

from fembem.mesh import induced_boundary_mesh, lshape_mesh, lshape_vertices
from fembem.operators import ConfigurationError, boundary_load, volume_load
from fembem.problems import (
    POLE,
    corner_singular,
    corner_singular_grad,
    exterior_dipole,
    exterior_dipole_grad,
    point_in_polygon,
    problem_transmission,
    problem_weaksing,
)


def _five_point(f, x, h):
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    return (f(x + e1) + f(x - e1) + f(x + e2) + f(x - e2) - 4 * f(x)) / h**2


def _fd_laplacian(f, x, h=2e-3):
    # one Richardson step removes the h^2 term of the five-point stencil
    return (4 * _five_point(f, x, h / 2) - _five_point(f, x, h)) / 3


def _fd_grad(f, x, h=1e-6):
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    return np.stack([(f(x + e1) - f(x - e1)) / (2 * h), (f(x + e2) - f(x - e2)) / (2 * h)], axis=1)


def test_corner_singular_values():
    assert corner_singular(np.zeros((1, 2)))[0] == 0.0
    r = np.array([0.01, 0.1, 0.2])
    x = np.stack([r, np.zeros(3)], axis=1)
    assert np.allclose(corner_singular(x), r ** (2 / 3), rtol=1e-15)


def test_corner_singular_harmonic():
    # sample points away from the branch cut on the negative x-axis
    rng = np.random.default_rng(0)
    r = rng.uniform(0.05, 0.3, 10)
    phi = rng.uniform(-2.5, 2.5, 10)
    x = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    lap = _fd_laplacian(corner_singular, x)
    assert np.abs(lap).max() <= 1e-6
    assert np.allclose(corner_singular_grad(x), _fd_grad(corner_singular, x), rtol=1e-6, atol=1e-8)


def test_exterior_dipole_harmonic_and_decaying():
    x = np.array([[0.6, 0.5], [-0.8, 0.3], [1.5, -1.0], [0.2, -0.7]])
    lap = _fd_laplacian(exterior_dipole, x)
    assert np.abs(lap).max() <= 1e-6
    assert np.allclose(exterior_dipole_grad(x), _fd_grad(exterior_dipole, x), rtol=1e-6, atol=1e-9)
    t = np.geomspace(1.0, 1e4, 30)
    ray = np.stack([t, 0.5 * t], axis=1)
    v = np.abs(exterior_dipole(ray))
    assert np.all(np.diff(v) < 0) and v[-1] < 1e-4


def test_pole_inside_domain():
    assert point_in_polygon(POLE, lshape_vertices())
    assert not point_in_polygon((5.0, 5.0), lshape_vertices())


def test_pole_outside_is_configuration_error():
    with pytest.raises(ConfigurationError):
        problem_transmission(rotation=0.25 * np.pi)


def test_transmission_data_consistent():
    p = problem_transmission()
    x = np.array([[0.05, 0.02], [-0.1, -0.1]])
    n = np.array([0.6, 0.8])
    assert np.allclose(p.u0(x), corner_singular(x) - exterior_dipole(x))
    expect = (corner_singular_grad(x) - exterior_dipole_grad(x)) @ n
    assert np.allclose(p.phi0(x, n), expect)
    assert p.f is None


def test_transmission_compatibility():
    # <f, 1> + <phi0, 1> = 0 because both u and u_ext are harmonic in the domain
    m = lshape_mesh()
    bm = induced_boundary_mesh(m)
    p = problem_transmission()
    total = volume_load(m, p.f).sum() + boundary_load(bm, p.phi0, p.singular_points, with_normal=True).sum()
    assert abs(total) <= 1e-6


def test_weaksing_data():
    p = problem_weaksing()
    x = np.array([[0.1, 0.05]])
    assert p.g(x) == pytest.approx(corner_singular(x))
    assert p.u_ext is None and np.allclose(p.u0(x), p.u(x))
