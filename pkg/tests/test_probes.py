import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpdecay.diagnostics import GaussianSpec, free_stream_oracle
from vpdecay.grid import PhaseField, build_grid
from vpdecay.littlewood_paley import SymbolSpec, psi_k
from vpdecay.probes import (ProbeReport, admissible_k, bilinear_Bk, bilinear_probe, bilinear_sweep, decay_norms,
                            decay_probe, decay_sweep, field_E, resolved_bound, spread, write_probe_csv)
from vpdecay.reconstruction import reconstruct_density
from vpdecay.transport import TransportModel, velocity_map

from conftest import gaussian_field

NR, RL = TransportModel("nonrelativistic"), TransportModel("relativistic")
ONE = SymbolSpec()


@pytest.fixture(scope="module")
def probe3():
    return gaussian_field(build_grid(3, 8, 32, 8.0, 6.0))


@pytest.fixture(scope="module")
def fine2():
    return gaussian_field(build_grid(2, 32, 32, 16.0, 6.0))


@pytest.mark.parametrize("t", [2.0, 8.0, 32.0])
def test_decay_lhs_closed_form(probe3, t):
    rep = decay_probe(probe3, t, 0.0, ONE, NR, np.zeros(3))
    ref = (2 * np.pi) ** 3 * (2 * np.pi) ** 1.5 * (1 + t * t) ** -1.5
    assert rep.lhs == pytest.approx(ref, rel=1e-3)
    assert rep.meta["resolved"] and rep.truncation_order == 2 and rep.meta["full_order"] == 5


@pytest.mark.parametrize("model", [NR, RL])
@pytest.mark.parametrize("t", [2.0, 6.0])
def test_decay_lhs_matches_reconstruction(fine2, model, t):
    rep = decay_probe(fine2, t, 0.0, ONE, model, np.zeros(2))
    rho = reconstruct_density(fine2, t, model, np.zeros((1, 2)))[0]
    assert rep.lhs == pytest.approx((2 * np.pi) ** 2 * rho, rel=1e-6 if model is NR else 5e-3)


def test_decay_relativistic_oracle(probe3):
    rep = decay_probe(probe3, 4.0, 0.0, ONE, RL, np.zeros(3))
    ref = (2 * np.pi) ** 3 * free_stream_oracle(GaussianSpec(), 4.0, 0.0, 3, RL)
    assert rep.lhs == pytest.approx(ref, rel=5e-3)


def test_decay_zero_data():
    g = build_grid(2, 8, 8, 8.0, 4.0)
    rep = decay_probe(PhaseField(g, np.zeros(g.phase_shape)), 3.0, 1.0, ONE, NR, np.zeros(2))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.ratio == 0.0


@given(c=st.floats(0.1, 10), t=st.floats(1, 20), a=st.sampled_from([0.0, 1.0, -1.5]))
@settings(max_examples=10, deadline=None)
def test_decay_homogeneity(c, t, a):
    g = build_grid(1, 16, 32, 16.0, 6.0)
    f = gaussian_field(g)
    r1 = decay_probe(f, t, a, ONE, NR, [0.3])
    r2 = decay_probe(PhaseField(g, c * f.values), t, a, ONE, NR, [0.3])
    assert r2.lhs == pytest.approx(c * r1.lhs, rel=1e-10)
    assert r2.rhs == pytest.approx(c * r1.rhs, rel=1e-10)


def test_decay_rhs_scaling():
    g = build_grid(1, 16, 32, 16.0, 6.0)
    n = decay_norms(gaussian_field(g), 1.0, ONE)
    assert n.rhs(2.0, 1.0) > n.rhs(4.0, 1.0) > 0
    assert n.rhs(-4.0, 1.0) == n.rhs(4.0, 1.0)


def test_decay_preconditions(probe3):
    with pytest.raises(ValueError):
        decay_probe(probe3, 0.5, 0.0, ONE, NR, np.zeros(3))
    with pytest.raises(ValueError):
        decay_probe(probe3, 2.0, -3.0, ONE, NR, np.zeros(3))


def _direct_E(f2, k, t, lat, mu):
    """Explicit triple sum for E(P_k f2)(y) with m = c = 1, evaluated at x + v t."""
    g = f2.grid
    xi = lat.axis[lat.mask]
    S = np.zeros(xi.size, dtype=complex)
    for i, u in enumerate(g.v_nodes):
        for j, x in enumerate(g.x_nodes):
            S += g.cell_v * g.cell_x * np.exp(-1j * (mu * t * u + x) * xi) * f2.values[i, j]
    S *= psi_k(k, np.abs(xi))
    E = np.empty(g.phase_shape)
    for i, v in enumerate(g.v_nodes):
        for j, x in enumerate(g.x_nodes):
            E[i, j] = (lat.dxi * np.sum(np.exp(1j * (x + v * t) * xi) * S)).real
    return E


@pytest.mark.parametrize("mu", [1, -1])
def test_Bk_direct_summation(mu):
    g = build_grid(1, 16, 16, 16.0, 5.0)
    k, t = -1, 1.0
    xi0 = 2.0**k
    f2 = PhaseField(g, np.multiply.outer(np.exp(-g.v_nodes**2 / 2), np.cos(xi0 * g.x_nodes)))
    f1 = PhaseField(g, np.ones(g.phase_shape))
    model = TransportModel(mu=mu)
    out = bilinear_Bk(f1, f2, k, t, ONE, model)
    _, lat, _ = field_E(f2, k, t, ONE, model)
    ref = _direct_E(f2, k, t, lat, mu)
    assert np.max(np.abs(out.values - ref)) <= 1e-8 * max(1.0, np.max(np.abs(ref)))


def test_Bk_linear_in_f2(rng):
    g = build_grid(2, 8, 8, 8.0, 4.0)
    f1 = gaussian_field(g)
    f2 = PhaseField(g, rng.standard_normal(g.phase_shape))
    f3 = gaussian_field(g, sx=1.5)
    a, b = 1.7, -0.4
    lhs = bilinear_Bk(f1, PhaseField(g, a * f2.values + b * f3.values), 0, 2.0, ONE, NR).values
    rhs = a * bilinear_Bk(f1, f2, 0, 2.0, ONE, NR).values + b * bilinear_Bk(f1, f3, 0, 2.0, ONE, NR).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_Bk_zero():
    g = build_grid(2, 8, 8, 8.0, 4.0)
    z = PhaseField(g, np.zeros(g.phase_shape))
    assert not bilinear_Bk(gaussian_field(g), z, 0, 2.0, ONE, NR).values.any()


@pytest.mark.parametrize("lemma", ["3.2", "3.3"])
def test_bilinear_zero_inputs(lemma):
    g = build_grid(2, 8, 8, 8.0, 4.0)
    z = PhaseField(g, np.zeros(g.phase_shape))
    rep = bilinear_probe(gaussian_field(g), z, None, -1, 2.0, ONE, NR, lemma)
    assert rep.lhs == 0.0


@pytest.mark.parametrize("lemma", ["3.2", "3.3"])
def test_bilinear_f1_scaling(lemma):
    g = build_grid(2, 8, 16, 8.0, 5.0)
    f = gaussian_field(g)
    r1 = bilinear_probe(f, f, None, -1, 2.0, ONE, NR, lemma)
    r2 = bilinear_probe(PhaseField(g, 2 * f.values), f, None, -1, 2.0, ONE, NR, lemma)
    assert r2.lhs == pytest.approx(2 * r1.lhs, rel=1e-12)
    assert r2.rhs == pytest.approx(2 * r1.rhs, rel=1e-12)
    assert abs(r2.ratio - r1.ratio) <= 1e-10 * r1.ratio


def test_bilinear_preconditions():
    g = build_grid(1, 8, 8, 8.0, 4.0)
    f = gaussian_field(g)
    with pytest.raises(ValueError):
        bilinear_probe(f, f, None, 1, 4.0, ONE, NR, "3.2")
    with pytest.raises(ValueError):
        bilinear_probe(f, f, None, 0, 0.5, ONE, NR)
    with pytest.raises(ValueError):
        bilinear_probe(f, f, None, 0, 2.0, ONE, NR, "3.4")
    with pytest.raises(ValueError):
        bilinear_probe(f, f, np.zeros((8, 2)), 0, 2.0, ONE, NR, "3.2")


def test_unresolved_shell_warns():
    g = build_grid(1, 8, 8, 8.0, 4.0)
    f = gaussian_field(g)
    with pytest.warns(RuntimeWarning, match="beyond"):
        field_E(f, 4, 2.0, ONE, NR)


@pytest.mark.parametrize("t,ks", [(1.0, [0]), (2.0, [-1, 0]), (8.0, [-3, -2, -1, 0]), (10.0, [-3, -2, -1, 0])])
def test_admissible_k(t, ks):
    assert admissible_k(t) == ks


def test_resolved_bound():
    g = build_grid(1, 8, 32, 8.0, 6.0)
    assert resolved_bound(g, 0.0) == pytest.approx(np.pi / g.dx)
    assert resolved_bound(g, 64.0, NR) == pytest.approx(np.pi / (64 * g.dv))
    assert resolved_bound(g, 64.0, RL) == pytest.approx(np.pi / (64 * 2 / 32))


def test_spread():
    assert spread([1.0, 2.0, 4.0]) == 4.0
    assert spread([0.0, 1.0]) == math.inf
    assert math.isnan(spread([]))


def test_report_and_csv(tmp_path):
    reps = [ProbeReport("3.1", 2.0, "summed", 0.0, "nonrelativistic", 1.0, 2.0, 2),
            ProbeReport("3.3", 8.0, -1, 0.0, "relativistic", 0.0, 0.0, 2)]
    assert reps[0].ratio == 0.5 and reps[1].ratio == 0.0
    with pytest.raises(ValueError):
        ProbeReport("3.1", 2.0, 0, 0.0, "x", -1.0, 1.0, 2)
    p = tmp_path / "p.csv"
    write_probe_csv(reps, p)
    rows = list(csv.DictReader(open(p)))
    assert float(rows[0]["lhs"]) == 1.0 and rows[1]["k"] == "-1"
    assert rows[0]["truncation_order"] == "2"


def test_sweeps_shape():
    g = build_grid(1, 16, 32, 16.0, 6.0)
    f = gaussian_field(g)
    reps = decay_sweep(f, [2.0, 4.0], [0.0, 1.0], [NR, RL])
    assert len(reps) == 8 and {r.model for r in reps} == {"nonrelativistic", "relativistic"}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        b = bilinear_sweep(f, f, None, [2.0, 4.0], NR, "3.2")
    assert [(r.t, r.k) for r in b] == [(2.0, -1), (2.0, 0), (4.0, -2), (4.0, -1), (4.0, 0)]
