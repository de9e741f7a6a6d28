import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpdecay.fields import MidpointRule, field_free_space, lattice_force, solve_poisson_torus
from vpdecay.grid import SpatialField, build_grid, spectral_derivative


def test_single_mode():
    g = build_grid(1, 16, 4, 2 * np.pi, 1.0)
    x = g.x_nodes
    res = solve_poisson_torus(SpatialField(g, np.cos(x)))
    np.testing.assert_allclose(res.phi.values, -np.cos(x), atol=1e-14)
    np.testing.assert_allclose(res.grad_phi[0].values, np.sin(x), atol=1e-14)
    assert res.regime == "torus"


def test_constant_density():
    g = build_grid(2, 8, 4, 3.0, 1.0)
    res = solve_poisson_torus(SpatialField(g, np.full(g.spatial_shape, 7.0)))
    assert np.max(np.abs(res.phi.values)) < 1e-14


@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
@settings(max_examples=20, deadline=None)
def test_superposition(a, b):
    g = build_grid(2, 16, 4, 6.0, 1.0)
    x, y = g.x_mesh()
    k = 2 * np.pi / g.Lx
    m1 = np.broadcast_to(np.cos(k * x), g.spatial_shape)
    m2 = np.broadcast_to(np.sin(2 * k * y), g.spatial_shape)
    phi = lambda r: solve_poisson_torus(SpatialField(g, r)).phi.values
    np.testing.assert_allclose(phi(a * m1 + b * m2), a * phi(m1) + b * phi(m2), atol=1e-12)


def test_laplacian_and_mean():
    g = build_grid(3, 16, 4, 8.0, 1.0)
    x = g.x_mesh()
    rho = np.exp(-sum(c * c for c in x))
    res = solve_poisson_torus(SpatialField(g, rho))
    assert abs(res.phi.values.mean()) < 1e-14
    lap = sum(spectral_derivative(res.phi, tuple(2 if j == a else 0 for j in range(3))).values for a in range(3))
    assert np.max(np.abs(lap - (rho - rho.mean()))) < 1e-10


RHO = lambda z: np.exp(-np.sum(z * z, axis=-1) / 2)


def test_free_space_origin():
    force, pot = field_free_space(RHO, 8.0, MidpointRule(96), np.zeros((1, 3)), return_potential=True)
    assert np.max(np.abs(force)) < 1e-12
    # (1/4 pi) int rho/|z| dz = int_0^inf r exp(-r^2/2) dr = 1
    assert pot[0] == pytest.approx(-1.0, rel=5e-3)


def test_free_space_far_field():
    R = 6.0
    y = np.array([[10 * R, 0.0, 0.0]])
    force = field_free_space(RHO, R, MidpointRule(24), y)
    mass = (2 * np.pi) ** 1.5
    assert np.linalg.norm(force) == pytest.approx(mass / (4 * np.pi * (10 * R) ** 2), rel=1e-2)
    # the force points away from the mass with Laplacian(phi) = rho
    assert force[0, 0] > 0


def test_free_space_decay_on_ray():
    R = 5.0
    ys = np.stack([np.linspace(R + 0.3, 4 * R, 12), np.zeros(12), np.zeros(12)], axis=1)
    _, pot = field_free_space(RHO, R, MidpointRule(20), ys, return_potential=True)
    assert np.all(np.diff(np.abs(pot)) < 0)


def test_free_space_rejects_node_target():
    with pytest.raises(ValueError, match="node"):
        field_free_space(RHO, 4.0, MidpointRule(8), np.array([[0.5, 0.5, 0.5]]))


def test_lattice_force_matches_direct(rng):
    n, h = 6, 0.7
    rho = rng.random((n, n, n))
    out = lattice_force(rho, h)
    c = h * np.arange(n)
    nodes = np.stack(np.meshgrid(c, c, c, indexing="ij"), -1).reshape(-1, 3)
    target = nodes[37] + 0.5 * h
    r = target - nodes
    dist = np.linalg.norm(r, axis=1)
    direct = (r / (4 * np.pi * dist[:, None] ** 3) * rho.reshape(-1)[:, None]).sum(0) * h**3
    idx = np.unravel_index(37, rho.shape)
    np.testing.assert_allclose(out[(slice(None),) + idx], direct, rtol=1e-10)
