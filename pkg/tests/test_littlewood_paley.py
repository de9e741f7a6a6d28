import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpdecay.grid import SpatialField, build_grid
from vpdecay.littlewood_paley import (SymbolSpec, multi_indices, project_k, psi_geq, psi_k, psi_leq, psi_tilde,
                                      shell_bounds, symbol_norm)

ONE = lambda xi, v=None: np.ones(xi.shape[:-1])
NORM_ONE_128 = 19.969323505277455  # symbol_norm(1, k, 0, d=3, points=128)


def test_bump_shape():
    x = np.linspace(-3, 3, 6001)
    np.testing.assert_array_equal(psi_tilde(x), psi_tilde(-x))
    assert np.all(psi_tilde(x[np.abs(x) <= 1.25]) == 1.0)
    assert np.all(psi_tilde(x[np.abs(x) >= 1.5]) == 0.0)
    assert np.all(np.diff(psi_tilde(x[x >= 0])) <= 0)


def _d2(x, h, side):
    return (psi_tilde(x + 2 * side * h) - 2 * psi_tilde(x + side * h) + psi_tilde(x)) / h**2


@pytest.mark.parametrize("join", [1.25, 1.5])
def test_bump_smooth_joins(join):
    d1 = (psi_tilde(join + 1e-5) - psi_tilde(join - 1e-5)) / 2e-5
    assert abs(d1) <= 1e-6
    # second derivative: extrapolate each one-sided estimate to h -> 0 and compare
    limits = []
    h = 2e-3
    for side in (1, -1):
        # the bump is a quintic, so the estimate is c1 h + c2 h^2 + c3 h^3; Richardson removes all three
        est = [_d2(join, h / 2**j, side) for j in range(4)]
        for p in (1, 2, 3):
            est = [(2**p * b - a) / (2**p - 1) for a, b in zip(est, est[1:])]
        limits.append(est[0])
    assert abs(limits[0] - limits[1]) <= 1e-6


@given(k=st.integers(-10, 10))
def test_psi_k_at_scale(k):
    assert psi_k(k, 2.0**k) == 1.0


@given(x=st.floats(2.0**-18, 2.0**18), sign=st.sampled_from([1, -1]))
@settings(max_examples=200)
def test_partition_of_unity(x, sign):
    total = sum(psi_k(k, sign * x) for k in range(-20, 21))
    assert abs(total - 1.0) <= 1e-12


@given(x=st.floats(0, 1e4), k=st.integers(-8, 8))
@settings(max_examples=100)
def test_telescoping(x, k):
    partial = sum(psi_k(l, x) for l in range(-60, k + 1))
    assert partial == pytest.approx(float(psi_leq(k, x)) - float(psi_tilde(x * 2.0**60)), abs=1e-12)
    assert float(psi_geq(k, x)) == pytest.approx(1.0 - float(psi_leq(k - 1, x)), abs=1e-15)


@pytest.mark.parametrize("k", [-3, 0, 4])
def test_shell_support(k):
    lo, hi = shell_bounds(k)
    assert (lo, hi) == (2.0 ** (k - 1) * 1.25, 2.0**k * 1.5)
    x = np.linspace(0, 2 * hi, 20001)
    nz = x[psi_k(k, x) != 0]
    assert nz.min() >= lo and nz.max() <= hi


def test_partition_residual_10k(rng):
    x = 2.0 ** rng.uniform(-18, 18, 10_000)
    total = sum(psi_k(k, x) for k in range(-20, 21))
    assert np.max(np.abs(total - 1.0)) <= 1e-12


def _modes(g, kvecs, coef):
    x = g.x_mesh()
    return sum(c * np.cos(sum(kv[a] * x[a] for a in range(g.d))) for kv, c in zip(kvecs, coef))


def test_project_single_mode():
    g = build_grid(2, 32, 4, 2 * np.pi, 1.0)
    u = SpatialField(g, np.broadcast_to(_modes(g, [(4, 0)], [1.0]), g.spatial_shape))
    np.testing.assert_allclose(project_k(u, 2).values, u.values, atol=1e-13)


def test_projection_sum_and_orthogonality():
    g = build_grid(2, 64, 4, 2 * np.pi, 1.0)
    vals = 0.7 + np.broadcast_to(_modes(g, [(1, 0), (3, 2), (7, 5), (12, 0)], [1.0, -0.5, 0.3, 0.2]), g.spatial_shape)
    u = SpatialField(g, vals)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        parts = {k: project_k(u, k) for k in range(-1, 6)}
        total = sum(p.values for p in parts.values())
        np.testing.assert_allclose(total, vals - vals.mean(), atol=1e-10)
        for k in parts:
            for j in parts:
                if abs(k - j) >= 2:
                    assert np.max(np.abs(project_k(parts[j], k).values)) < 1e-12


def test_project_warns_unresolved():
    g = build_grid(1, 8, 4, 2 * np.pi, 1.0)
    with pytest.warns(RuntimeWarning):
        project_k(SpatialField(g, np.zeros(8)), 6)


def test_symbol_norm_scale_invariant():
    vals = [symbol_norm(ONE, k, 2) for k in range(-3, 4)]
    assert max(vals) / min(vals) - 1 <= 0.01


def test_symbol_norm_regression():
    assert symbol_norm(ONE, 0, 0, d=3, points=128) == pytest.approx(NORM_ONE_128, rel=1e-10)
    assert symbol_norm(ONE, 3, 0, d=3, points=128) == pytest.approx(NORM_ONE_128, rel=1e-10)


def test_symbol_norm_radial_oracle():
    # ||F^-1 psi_0||_L1 by the radial transform K(r) = (2 pi^2 r)^-1 int psi_0(p) p sin(p r) dp
    p = np.linspace(0.625, 1.5, 2001)
    w = np.full(p.size, 2.0)
    w[1::2], w[0], w[-1] = 4.0, 1.0, 1.0
    ps = psi_k(0, p) * p * w * (p[1] - p[0]) / 3
    h = 0.02
    r = np.arange(h / 2, 800, h)
    K = np.array([ps @ np.sin(p * ri) for ri in r]) / (2 * np.pi**2 * r)
    radial = np.sum(4 * np.pi * r * r * np.abs(K)) * h
    assert NORM_ONE_128 == pytest.approx(radial, rel=0.02)
    assert abs(NORM_ONE_128 - radial) < abs(symbol_norm(ONE, 0, 0, d=3, points=64) - radial)


def test_symbol_norm_quadratic_symbol():
    m = lambda xi, v=None: np.sum(xi * xi, axis=-1)
    vals = [symbol_norm(m, k, 2) / 4.0**k for k in range(-2, 3)]
    assert max(vals) / min(vals) - 1 <= 0.02


def test_symbol_norm_spec_and_limits():
    assert symbol_norm(SymbolSpec(), 1, 1) == pytest.approx(symbol_norm(ONE, 1, 1), rel=1e-14)
    with pytest.raises(ValueError):
        symbol_norm(ONE, 0, 11)
    with pytest.raises(ValueError):
        SymbolSpec(a=-3)


@pytest.mark.parametrize("d,order,count", [(1, 3, 4), (2, 2, 6), (3, 2, 10)])
def test_multi_indices(d, order, count):
    idx = list(multi_indices(d, order))
    assert len(idx) == count and len(set(idx)) == count
    assert len(list(multi_indices(d, order, exact=True))) == sum(1 for a in idx if sum(a) == order)
