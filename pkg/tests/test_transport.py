import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vpdecay.transport import (TransportModel, inverse_velocity_map, jacobian_determinant, velocity_jacobian,
                               velocity_map)

NR, RL = TransportModel("nonrelativistic"), TransportModel("relativistic")
vecs = arrays(float, 3, elements=st.floats(-1e3, 1e3))


@pytest.mark.parametrize("model", [NR, RL])
def test_zero(model):
    np.testing.assert_array_equal(velocity_map(np.zeros(3), model), np.zeros(3))


def test_examples():
    v = np.array([3.0, 4.0, 0.0])
    np.testing.assert_array_equal(velocity_map(v, NR), v)
    a = velocity_map(v, RL)
    np.testing.assert_allclose(a, v / np.sqrt(26), rtol=1e-15)
    assert np.linalg.norm(a) == pytest.approx(0.9806, abs=1e-4)


def test_bad_model():
    with pytest.raises(ValueError):
        TransportModel("galilean")
    with pytest.raises(ValueError):
        TransportModel(mu=0)


@given(vecs)
@settings(max_examples=60)
def test_speed_limit_and_inverse(v):
    a = velocity_map(v, RL)
    assert np.linalg.norm(a) < 1
    if np.linalg.norm(v) < 50:
        np.testing.assert_allclose(inverse_velocity_map(a, RL), v, rtol=1e-9, atol=1e-9)


@given(arrays(float, 3, elements=st.floats(-5, 5)))
@settings(max_examples=40)
def test_jacobian_fd(v):
    h = 1e-6
    fd = np.stack([(velocity_map(v + h * e, RL) - velocity_map(v - h * e, RL)) / (2 * h) for e in np.eye(3)], axis=1)
    J = velocity_jacobian(v, RL)
    np.testing.assert_allclose(J, fd, atol=1e-8)
    assert jacobian_determinant(v, RL) == pytest.approx(np.linalg.det(J), rel=1e-10)
