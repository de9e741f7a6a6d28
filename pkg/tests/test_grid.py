import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from vpdecay.grid import (PhaseField, SpatialField, build_grid, density, interpolate, l2_norm, poly_weight,
                          read_snapshot, spectral_derivative, sup_norm, write_snapshot, zero_mode)

from conftest import gaussian_field


def test_grid_1d_nodes():
    g = build_grid(1, 8, 8, 8, 4)
    np.testing.assert_array_equal(g.x_nodes, np.arange(-4.0, 4.0))
    assert g.dx == 1.0 and g.dv == 1.0


def test_grid_3d_counts():
    g = build_grid(3, 16, 16, 16, 4)
    assert g.dx == 1.0 and g.dv == 0.5
    assert np.prod(g.phase_shape) == 16**6


@pytest.mark.parametrize("kw", [dict(Nx=6), dict(Nv=12), dict(Nx=2), dict(Lx=-1.0), dict(Vmax=0.0), dict(d=4)])
def test_grid_rejects(kw):
    args = dict(d=2, Nx=8, Nv=8, Lx=8.0, Vmax=4.0) | kw
    with pytest.raises(ValueError, match="power of two" if "Nx" in kw or "Nv" in kw else None):
        build_grid(**args)


def test_cell_volumes():
    g = build_grid(3, 8, 16, 10.0, 3.0)
    assert g.cell_x == pytest.approx((10 / 8) ** 3)
    assert g.cell_v == pytest.approx((6 / 16) ** 3)


def test_field_rejects_nan():
    g = build_grid(1, 4, 4, 1, 1)
    vals = np.zeros(g.phase_shape)
    vals[0, 0] = np.nan
    with pytest.raises(ValueError):
        PhaseField(g, vals)
    with pytest.raises(ValueError):
        PhaseField(g, np.zeros((3, 3)))


def test_density_zero_and_mass(rng):
    g = build_grid(2, 8, 8, 6.0, 3.0)
    assert not density(PhaseField(g, np.zeros(g.phase_shape))).values.any()
    f = PhaseField(g, rng.standard_normal(g.phase_shape))
    rho = density(f)
    assert g.cell_x * rho.values.sum() == pytest.approx(g.cell_x * g.cell_v * f.values.sum(), rel=1e-12)


def test_density_gaussian_3d():
    g = build_grid(3, 8, 32, 10.0, 6.0)
    rho = density(gaussian_field(g))
    i = g.Nx // 2
    assert rho.values[i, i, i] == pytest.approx((2 * np.pi) ** 1.5, rel=1e-6)


def test_derivative_single_mode():
    g = build_grid(3, 8, 4, 7.0, 1.0)
    x1 = g.x_mesh()[0]
    k = 2 * np.pi / g.Lx
    u = SpatialField(g, np.broadcast_to(np.cos(k * x1), g.spatial_shape))
    du = spectral_derivative(u, (1, 0, 0))
    np.testing.assert_allclose(du.values, np.broadcast_to(-k * np.sin(k * x1), g.spatial_shape), atol=1e-13)
    np.testing.assert_array_equal(spectral_derivative(u, (0, 0, 0)).values, u.values)


def test_derivative_hermite():
    g = build_grid(3, 32, 4, 16.0, 1.0)
    x = g.x_mesh()
    r2 = sum(c * c for c in x)
    u = SpatialField(g, np.exp(-r2 / 2))
    ref = (x[0] ** 2 - 1) * np.exp(-r2 / 2)
    assert np.max(np.abs(spectral_derivative(u, (2, 0, 0)).values - ref)) < 1e-8


def test_derivative_order_cap():
    g = build_grid(1, 8, 8, 1, 1)
    with pytest.raises(ValueError, match="exceeds"):
        spectral_derivative(SpatialField(g, np.zeros(8)), (5,))


def test_velocity_derivative():
    g = build_grid(1, 4, 64, 4.0, 8.0)
    v = g.v_nodes
    f = PhaseField(g, np.multiply.outer(np.exp(-v**2 / 2), np.ones(4)))
    dv = spectral_derivative(f, (1,), space="velocity")
    np.testing.assert_allclose(dv.values[:, 0], -v * np.exp(-v**2 / 2), atol=1e-10)


def _mode_field(g):
    x1 = g.x_mesh()[0]
    return PhaseField(g, np.broadcast_to(np.cos(2 * np.pi * x1 / g.Lx), g.phase_shape).copy())


def test_interpolate_identities():
    g = build_grid(2, 8, 4, 5.0, 1.0)
    f = _mode_field(g)
    np.testing.assert_allclose(interpolate(f, np.zeros(2)).values, f.values, atol=1e-15)
    np.testing.assert_allclose(interpolate(f, np.array([g.Lx, 0.0])).values, f.values, atol=1e-13)


@given(s=st.floats(-20, 20))
@settings(max_examples=30, deadline=None)
def test_interpolate_phase_shift(s):
    g = build_grid(2, 8, 4, 5.0, 1.0)
    x1 = g.x_mesh()[0]
    out = interpolate(_mode_field(g), np.array([s, 0.0]))
    ref = np.broadcast_to(np.cos(2 * np.pi * (x1 + s) / g.Lx), g.phase_shape)
    np.testing.assert_allclose(out.values, ref, atol=1e-12)


def test_norms_constant():
    g = build_grid(2, 8, 8, 4.0, 2.0)
    u = SpatialField(g, np.full(g.spatial_shape, -3.0))
    assert sup_norm(u) == 3.0
    assert l2_norm(u) == pytest.approx(3.0 * np.sqrt(g.Lx**2), rel=1e-14)


def test_norm_indicator():
    g = build_grid(2, 8, 8, 4.0, 2.0)
    vals = np.zeros(g.phase_shape)
    vals[1, 2, 3, 4] = 1.0
    assert l2_norm(PhaseField(g, vals)) == pytest.approx(np.sqrt(g.cell_x * g.cell_v), rel=1e-14)


def test_weighted_norm_quadrature():
    # the weight has a kink at the origin, so the node sum is only second order
    g = build_grid(1, 1024, 1024, 20.0, 10.0)
    f = gaussian_field(g)
    got = l2_norm(f, poly_weight(2))
    quadrant, _ = integrate.dblquad(lambda v, x: ((1 + v + x) ** 2 * np.exp(-(x * x + v * v) / 2)) ** 2,
                                    0, 10, 0, 10, epsabs=1e-13, epsrel=1e-13)
    assert got == pytest.approx(np.sqrt(4 * quadrant), rel=1e-4)


@given(c=st.floats(-1e3, 1e3).filter(lambda c: c == 0 or abs(c) > 1e-100))
@settings(max_examples=25, deadline=None)
def test_norm_homogeneity(c):
    g = build_grid(1, 8, 8, 4.0, 2.0)
    f = gaussian_field(g)
    assert l2_norm(PhaseField(g, c * f.values)) == pytest.approx(abs(c) * l2_norm(f), rel=1e-12, abs=1e-300)


def test_zero_mode_sum():
    g = build_grid(2, 8, 8, 4.0, 2.0)
    f = gaussian_field(g)
    m = zero_mode(f.values, g)
    assert m.shape == g.velocity_shape
    assert g.cell_v * m.sum() == pytest.approx(g.cell_x * g.cell_v * f.values.sum(), rel=1e-13)


def test_snapshot_roundtrip(tmp_path, rng):
    g = build_grid(2, 8, 4, 3.0, 1.5)
    f = PhaseField(g, rng.standard_normal(g.phase_shape))
    p = tmp_path / "s.vpf"
    write_snapshot(p, f)
    back = read_snapshot(p)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
