"""Weighted energies, the correction term, power-law fits, scattering gaps and the free-streaming oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .grid import (DerivativeEngine, PhaseGrid, l2_norm_array, poly_weight, velocity_derivative,
                   velocity_l2, zero_mode)
from .littlewood_paley import multi_indices
from .transport import TransportModel, velocity_map


@dataclass(frozen=True)
class WeightConfig:
    """Weight exponents of the energies.

    Attributes:
        N0: top derivative order.
        delta: reference growth exponent for E_high (reporting only).
    """

    N0: int = 2
    delta: float = 0.01

    def __post_init__(self):
        if self.N0 < 0:
            raise ValueError("N0 must be nonnegative")

    def exponent_high(self, order: int) -> float:
        return max(0.0, 10.0 * self.N0 - 8.0 * order)

    def exponent_low(self, order: int) -> float:
        return max(0.0, 10.0 * self.N0 - 8.0 * order - 20.0)


def energy_high(g, w: WeightConfig, engine: DerivativeEngine | None = None) -> tuple:
    """(E1, E2): weighted L2 norms of d_x^alpha d_v^beta g summed over |alpha|+|beta| = N0 and < N0."""
    grid = g.grid
    d = grid.d
    engine = engine or DerivativeEngine(g.values, grid, max_order=max(w.N0, 1))
    e1 = e2 = 0.0
    for order in range(w.N0 + 1):
        weight = poly_weight(w.exponent_high(order))
        for ab in multi_indices(2 * d, order, exact=True):
            beta, alpha = ab[:d], ab[d:]
            val = l2_norm_array(engine.mixed(alpha, beta), grid, weight)
            if order == w.N0:
                e1 += val
            else:
                e2 += val
    return e1, e2


@dataclass
class CorrectionAccumulator:
    """Running trapezoid integrals g_alpha(t, v) for every top-order multi-index alpha."""

    grid: PhaseGrid
    N0: int
    values: dict = field(default_factory=dict)
    last_t: float | None = None
    last_integrand: dict | None = None

    def __post_init__(self):
        d = self.grid.d
        for alpha in multi_indices(d, self.N0, exact=True):
            self.values.setdefault(alpha, np.zeros((d,) + self.grid.velocity_shape))

    def norm(self, w: WeightConfig) -> float:
        """sum over alpha of ||(1+|v|)^{exponent_low} g_alpha||_{L2_v}."""
        p = w.exponent_low(self.N0)
        return float(sum(velocity_l2(np.moveaxis(v, 0, -1), self.grid, p) for v in self.values.values()))


def correction_integrand(force_at_shifted: np.ndarray, engine: DerivativeEngine, N0: int,
                         sign: float = 1.0) -> dict:
    """sign * dx^d sum_x F(x + a(v) t) d_v^alpha g(x, v) for each |alpha| = N0."""
    grid = engine.grid
    d = grid.d
    out = {}
    for alpha in multi_indices(d, N0, exact=True):
        dg = engine.mixed((0,) * d, alpha).reshape(grid.Nv**d, grid.Nx**d)
        F = force_at_shifted.reshape(d, grid.Nv**d, grid.Nx**d)
        val = np.einsum("cvx,vx->cv", F, dg).reshape((d,) + grid.velocity_shape)
        out[alpha] = sign * grid.cell_x * val
    return out


def accumulate_correction(acc: CorrectionAccumulator, force_at_shifted: np.ndarray, g, t: float, dt: float | None,
                          w: WeightConfig, sign: float = 1.0, engine: DerivativeEngine | None = None):
    """Add the trapezoid increment of int F(s, x + a(v)s) d_v^alpha g dx over the last step.

    ``sign`` multiplies the integrand (the profile solver passes -mu so that the
    low-order energy combination is conserved).
    """
    engine = engine or DerivativeEngine(g.values, g.grid, max_order=max(w.N0, 1))
    integrand = correction_integrand(force_at_shifted, engine, acc.N0, sign)
    if acc.last_integrand is not None:
        step = (t - acc.last_t) if dt is None else dt
        for alpha, val in integrand.items():
            acc.values[alpha] = acc.values[alpha] + 0.5 * step * (acc.last_integrand[alpha] + val)
    acc.last_t = t
    acc.last_integrand = integrand
    return acc


def energy_low(g, corrections: CorrectionAccumulator | None, w: WeightConfig) -> float:
    """sum over |alpha| <= N0 of ||(1+|v|)^{exp} (d_v^alpha m - div_v g_alpha)||_{L2_v}, m = g_hat(t,0,v)."""
    grid = g.grid
    d = grid.d
    m = zero_mode(g.values, grid)
    total = 0.0
    for order in range(w.N0 + 1):
        for alpha in multi_indices(d, order, exact=True):
            term = velocity_derivative(m, grid, alpha)
            if order == w.N0 and corrections is not None:
                ga = corrections.values[alpha]
                div = sum(velocity_derivative(ga[c], grid, tuple(int(c == j) for j in range(d))) for c in range(d))
                term = term - div
            total += velocity_l2(term, grid, w.exponent_low(order))
    return total


def fit_power_law(series, window) -> tuple:
    """Least squares of log y against log t inside ``window``.

    Returns ``(slope, intercept, max_abs_log_residual)``.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == 2 and arr.shape[1] != 2:
        t, y = arr
    else:
        t, y = arr[:, 0], arr[:, 1]
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    t, y = t[sel], y[sel]
    if t.size < 4:
        raise ValueError(f"need at least 4 samples in window, got {t.size}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("power-law fit needs positive samples (decay measurement failed)")
    lt, ly = np.log(t), np.log(y)
    A = np.stack([lt, np.ones_like(lt)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lt + intercept)
    return float(slope), float(intercept), float(np.max(np.abs(resid)))


def scattering_gap(mA: np.ndarray, mB: np.ndarray, w: WeightConfig, grid: PhaseGrid) -> float:
    """Weighted L2_v distance between two zero modes g_hat(t1, 0, .) and g_hat(t2, 0, .)."""
    if np.shape(mA) != np.shape(mB):
        raise ValueError("zero modes live on different grids")
    return velocity_l2(np.asarray(mA) - np.asarray(mB), grid, w.exponent_low(0))


@dataclass(frozen=True)
class GaussianSpec:
    """f0(x, v) = A exp(-|x|^2 / (2 sx^2)) exp(-|v|^2 / (2 sv^2))."""

    A: float = 1.0
    sx: float = 1.0
    sv: float = 1.0


def free_stream_oracle(params: GaussianSpec, t: float, x, d: int, model: TransportModel,
                       closed_form: bool = True) -> float:
    """Density of freely streamed Gaussian data at position ``x``.

    Non-relativistic data use the closed form unless ``closed_form`` is False;
    otherwise the velocity integral is reduced analytically in the angle and
    the remaining radial integral is done adaptively.
    """
    A, sx, sv = params.A, params.sx, params.sv
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 1 and d > 1:
        x = np.full(d, float(x[0])) if x[0] == 0 else np.concatenate([x, np.zeros(d - 1)])
    r2 = float(np.sum(x * x))
    if not model.relativistic and closed_form:
        s2 = sx**2 + t * t * sv**2
        return float(A * (2 * np.pi * sx**2 * sv**2 / s2) ** (d / 2) * np.exp(-r2 / (2 * s2)))
    speed = (lambda r: r / np.sqrt(1 + r * r)) if model.relativistic else (lambda r: r)
    R = np.sqrt(r2)
    rmax = 14.0 * sv
    if d == 1:
        def f(v):
            return np.exp(-(x[0] - t * speed(v)) ** 2 / (2 * sx**2) - v * v / (2 * sv**2))
        val, _ = integrate.quad(f, -rmax, rmax, epsabs=0, epsrel=1e-12, limit=400)
        return float(A * val)

    def radial(r):
        a = t * speed(r)
        c = a * R / sx**2
        base = np.exp(-(R - a) ** 2 / (2 * sx**2) - r * r / (2 * sv**2))
        if d == 3:
            ang = 2.0 if c < 1e-12 else -np.expm1(-2 * c) / c
            return 2 * np.pi * r * r * base * ang
        return 2 * np.pi * r * base * special.i0e(c)

    peak = 0.0
    if t > 0 and R > 0:
        # the integrand peaks where t a(r) ~ |x|; split there for the adaptive rule
        target = R / t
        if model.relativistic:
            peak = target / np.sqrt(1 - target**2) if target < 1 else rmax
        else:
            peak = target
    pts = sorted({p for p in (peak, sv) if 0 < p < rmax})
    val, _ = integrate.quad(radial, 0.0, rmax, epsabs=0, epsrel=1e-12, limit=400, points=pts or None)
    return float(A * val)


@dataclass
class DecaySeries:
    """Samples of sup |grad^k rho| for k = 0..K."""

    times: list = field(default_factory=list)
    sups: list = field(default_factory=list)

    def add(self, t: float, values) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("times must increase strictly")
        self.times.append(float(t))
        self.sups.append([float(v) for v in values])

    def slopes(self, window) -> list:
        arr = np.asarray(self.sups)
        return [fit_power_law((np.asarray(self.times), arr[:, k]), window) for k in range(arr.shape[1])]


@dataclass
class EnergySeries:
    """Samples of (E_high1, E_high2, E_low, ||g_alpha||) with the weights used."""

    weights: WeightConfig
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def add(self, t: float, e1: float, e2: float, elow: float, ga: float) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("times must increase strictly")
        self.times.append(float(t))
        self.rows.append((float(e1), float(e2), float(elow), float(ga)))
