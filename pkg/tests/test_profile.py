import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpdecay.diagnostics import WeightConfig
from vpdecay.grid import PhaseField, build_grid, l2_norm, spectral_derivative
from vpdecay.profile import (ProfileState, SupportViolation, evolve, from_profile, profile_rhs, step_profile,
                             to_profile)
from vpdecay.torus import advect_x
from vpdecay.transport import TransportModel

from conftest import gaussian_field

NR, RL = TransportModel("nonrelativistic"), TransportModel("relativistic")


@pytest.fixture(scope="module")
def smooth():
    # periodic-smooth in x and resolved in both variables
    return gaussian_field(build_grid(2, 64, 16, 24.0, 5.0))


@pytest.mark.parametrize("model", [NR, RL])
def test_profile_maps(smooth, model):
    np.testing.assert_array_equal(to_profile(smooth, 0.0, model).values, smooth.values)
    back = from_profile(to_profile(smooth, 1.7, model), 1.7, model)
    assert np.max(np.abs(back.values - smooth.values)) < 1e-12


@given(t=st.floats(0, 2))
@settings(max_examples=10, deadline=None)
def test_free_transport_profile_constant(smooth, t):
    f_t = advect_x(smooth, t, NR)
    assert np.max(np.abs(to_profile(f_t, t, NR).values - smooth.values)) < 1e-10


def _const_force(F):
    F = np.asarray(F, dtype=float)
    return lambda pts: np.broadcast_to(F, pts.shape)


def test_rhs_zero_field(smooth):
    out = profile_rhs(smooth, 1.0, NR, _const_force([0.0, 0.0]))
    assert not out.values.any()


@pytest.mark.parametrize("mu", [1, -1])
def test_rhs_t0_constant_force(mu):
    g = build_grid(2, 8, 32, 8.0, 6.0)
    f = gaussian_field(g)
    F = np.array([0.7, -0.3])
    model = TransportModel(mu=mu)
    out = profile_rhs(f, 0.0, model, _const_force(F))
    ref = -mu * sum(F[j] * spectral_derivative(f, tuple(int(i == j) for i in range(2)), "velocity").values
                    for j in range(2))
    np.testing.assert_allclose(out.values, ref, atol=1e-13)
    # the velocity divergence of a compactly supported function integrates to zero
    assert np.max(np.abs(g.cell_v * out.values.sum(axis=g.v_axes))) < 1e-10


def test_rhs_shift_term():
    # nonzero t: the -t Da^T grad_x term appears with the shifted force
    g = build_grid(1, 16, 32, 12.0, 6.0)
    f = gaussian_field(g)
    F, t = 0.4, 1.5
    out = profile_rhs(f, t, NR, _const_force([F]))
    dv = spectral_derivative(f, (1,), "velocity").values
    dx = spectral_derivative(f, (1,), "position").values
    np.testing.assert_allclose(out.values, -F * (dv - t * dx), atol=1e-12)


def test_zero_data_and_zeroed_field():
    g = build_grid(2, 16, 16, 12.0, 5.0)
    z = ProfileState(0.0, PhaseField(g, np.zeros(g.phase_shape)), NR)
    s = evolve(z, 0.25, 3)
    assert not s.g.values.any() and s.t == pytest.approx(0.75)
    f = gaussian_field(g, A=1e-3)
    s = evolve(ProfileState(0.0, f, NR, field_zeroed=True), 0.25, 3)
    np.testing.assert_array_equal(s.g.values, f.values)


def test_support_violation():
    g = build_grid(1, 16, 16, 4.0, 5.0)
    f = gaussian_field(g, A=10.0, sx=2.0)
    with pytest.raises(SupportViolation):
        step_profile(ProfileState(0.0, f, NR), 0.5)


def test_bad_dt():
    g = build_grid(1, 8, 8, 8.0, 4.0)
    with pytest.raises(ValueError):
        step_profile(ProfileState(0.0, gaussian_field(g), NR), 0.0)


@pytest.mark.parametrize("model", [NR, RL])
def test_quadratic_smallness(model):
    g = build_grid(2, 16, 16, 12.0, 5.0)
    gaps = []
    for eps in (1e-2, 5e-3):
        f = gaussian_field(g, A=eps)
        s = evolve(ProfileState(0.0, f, model, WeightConfig(1), support_tol=1e-2), 0.5, 4)
        gaps.append(l2_norm(PhaseField(g, s.g.values - f.values)))
    assert gaps[0] > 0
    assert gaps[1] / gaps[0] == pytest.approx(0.25, rel=0.2)
