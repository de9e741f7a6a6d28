"""Profile backend: evolves g(t, x, v) = f(t, x + t a(v), v) on a fixed compact box.

The right side follows from the Vlasov equation by the chain rule:

    d_t g = -mu F(x + t a(v)) . (grad_v g - t Da(v)^T grad_x g),   F = grad phi,

with the free-space force of the reconstructed density.  The force is
computed on an auxiliary lattice over the reachable set and interpolated
multilinearly to the shifted points.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .diagnostics import CorrectionAccumulator, WeightConfig, accumulate_correction
from .fields import lattice_force
from .grid import (DerivativeEngine, PhaseField, PhaseGrid, axis_multiplier, position_boundary_max,
                   shift_array, velocity_boundary_max)
from .reconstruction import DensityReconstructor
from .transport import TransportModel, velocity_jacobian, velocity_map

MAX_LATTICE = 128
LATTICE_SIZES = (16, 24, 32, 40, 48, 64, 80, 96, 112, 128, 160, 192, 256)


class SupportViolation(RuntimeError):
    """The profile reached the edge of its box."""


class NonFiniteState(RuntimeError):
    """NaN or Inf appeared in the state."""


def to_profile(f: PhaseField, t: float, model: TransportModel) -> PhaseField:
    """g(x, v) = f(x + t a(v), v) by per-velocity phase shifts."""
    if t == 0:
        return PhaseField(f.grid, f.values.copy())
    off = t * velocity_map(f.grid.v_points(), model)
    return PhaseField(f.grid, shift_array(f.values, f.grid, off))


def from_profile(g: PhaseField, t: float, model: TransportModel) -> PhaseField:
    """Inverse of :func:`to_profile`."""
    if t == 0:
        return PhaseField(g.grid, g.values.copy())
    off = -t * velocity_map(g.grid.v_points(), model)
    return PhaseField(g.grid, shift_array(g.values, g.grid, off))


# ---------------------------------------------------------------- force lattice

@dataclass
class ForceLattice:
    """grad phi sampled on the cubic lattice ``origin + i * spacing`` (components first)."""

    origin: float
    spacing: float
    force: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.force.shape[1]

    def _locate(self, coord: np.ndarray):
        q = (coord - self.origin) / self.spacing
        i = np.clip(np.floor(q).astype(np.int64), 0, self.n - 2)
        w = np.clip(q - i, 0.0, 1.0)
        return i, w

    def __call__(self, points) -> np.ndarray:
        """Multilinear interpolation at points (..., d); returns (..., d)."""
        points = np.asarray(points, dtype=float)
        d = points.shape[-1]
        flat = points.reshape(-1, d)
        out = np.zeros_like(flat)
        idx, wts = zip(*(self._locate(flat[:, a]) for a in range(d)))
        for corner in np.ndindex(*(2,) * d):
            w = np.ones(len(flat))
            ix = []
            for a in range(d):
                w = w * (wts[a] if corner[a] else 1.0 - wts[a])
                ix.append(idx[a] + corner[a])
            for c in range(d):
                out[:, c] += w * self.force[c][tuple(ix)]
        return out.reshape(points.shape)

    def at_shifted(self, grid: PhaseGrid, t: float, model: TransportModel) -> np.ndarray:
        """F(x + t a(v)) on every phase node, shape ``(d,) + phase_shape``."""
        d = grid.d
        if not model.relativistic:
            return self._separable(grid, t)
        vpts = grid.v_points()
        shift = t * velocity_map(vpts, model).reshape(-1, d)
        x = grid.x_points().reshape(-1, d)
        out = np.empty((d, shift.shape[0], x.shape[0]))
        for j in range(shift.shape[0]):
            out[:, j, :] = self(x + shift[j]).T
        return out.reshape((d,) + grid.phase_shape)

    def _separable(self, grid: PhaseGrid, t: float) -> np.ndarray:
        # x_a + t v_a depends on one (v_a, x_a) pair per axis: two-tap blends, last axis first
        d = grid.d
        coord = grid.x_nodes[None, :] + t * grid.v_nodes[:, None]  # (Nv, Nx)
        i, w = self._locate(coord.reshape(-1))
        perm = [2 * a for a in range(d)] + [2 * a + 1 for a in range(d)]
        out = np.empty((d,) + grid.phase_shape)
        for c in range(d):
            A = self.force[c]
            for ax in range(d - 1, -1, -1):
                shape = [1] * A.ndim
                shape[ax] = w.size
                lo = np.take(A, i, axis=ax)
                hi = np.take(A, i + 1, axis=ax)
                hi -= lo
                hi *= w.reshape(shape)
                lo += hi
                A = lo
            out[c] = np.transpose(A.reshape((grid.Nv, grid.Nx) * d), perm)
        return out


def lattice_reach(grid: PhaseGrid, t: float, model: TransportModel) -> float:
    """Half-width of the cube holding every shifted point x + t a(v)."""
    a = velocity_map(np.stack([grid.v_nodes] + [np.zeros(grid.Nv)] * (grid.d - 1), axis=-1), model)
    return 0.5 * grid.Lx + abs(t) * float(np.max(np.abs(a[:, 0])))


def build_force_lattice(rec: DensityReconstructor, t: float, max_points: int = MAX_LATTICE) -> ForceLattice:
    """Free-space force of rho(t) on a lattice over the reachable set.

    The spacing is at most sqrt(1 + t^2)/8 and at most dx; when that needs more than
    ``max_points`` nodes per axis the spacing is widened to fit.
    """
    grid = rec.grid
    R = lattice_reach(grid, t, rec.model)
    h = min(np.sqrt(1.0 + t * t) / 8.0, grid.dx)
    need = int(np.ceil(2 * R / h + 1)) + 1
    if need > max_points:
        need = max_points
        h = 2 * R / (need - 2)
    # padded FFT lengths 2n stay smooth and the kernel transform is reused
    n = next((m for m in LATTICE_SIZES if m >= need), need)
    R = 0.5 * (n - 2) * h
    z = -R - h + h * np.arange(n)
    rho = rec.lattice(t, z)
    force = lattice_force(rho, h)
    return ForceLattice(origin=-R - 0.5 * h, spacing=h, force=force)


# ---------------------------------------------------------------- right side

def _phase_multiplier(grid: PhaseGrid, ax: int) -> np.ndarray:
    """First-derivative factor along phase axis ``ax`` broadcast to the full rfft shape."""
    d = grid.d
    k = grid.kv if ax < d else grid.kx
    m = axis_multiplier(k, 1)
    if ax == 2 * d - 1:
        m = m[: grid.Nx // 2 + 1]
    shape = [1] * (2 * d)
    shape[ax] = m.size
    return m.reshape(shape)


def _rhs_from_spectrum(spec: np.ndarray, grid: PhaseGrid, t: float, model: TransportModel,
                       shifted: np.ndarray) -> np.ndarray:
    d = grid.d
    shape = grid.phase_shape
    out = np.zeros(shape)
    if not model.relativistic:
        for c in range(d):
            mult = _phase_multiplier(grid, c) - t * _phase_multiplier(grid, d + c)
            out += shifted[c] * sfft.irfftn(spec * mult, s=shape)
    else:
        jac = velocity_jacobian(grid.v_points(), model)  # (v..., i, j)
        vdims = (slice(None),) * d + (None,) * d
        for j in range(d):
            out += shifted[j] * sfft.irfftn(spec * _phase_multiplier(grid, j), s=shape)
        for i in range(d):
            W = sum(jac[..., i, j][vdims] * shifted[j] for j in range(d))
            out -= t * W * sfft.irfftn(spec * _phase_multiplier(grid, d + i), s=shape)
    out *= -model.mu
    return out


def shifted_force(field_eval, grid: PhaseGrid, t: float, model: TransportModel) -> np.ndarray:
    """Evaluate ``field_eval`` (ForceLattice or callable on (n, d) points) at x + t a(v)."""
    if isinstance(field_eval, ForceLattice):
        return field_eval.at_shifted(grid, t, model)
    d = grid.d
    shift = t * velocity_map(grid.v_points(), model).reshape(-1, d)
    x = grid.x_points().reshape(-1, d)
    out = np.empty((d, shift.shape[0], x.shape[0]))
    for j in range(shift.shape[0]):
        out[:, j, :] = np.asarray(field_eval(x + shift[j])).T
    return out.reshape((d,) + grid.phase_shape)


def profile_rhs(g: PhaseField, t: float, model: TransportModel, field_eval) -> PhaseField:
    """-mu F(x + t a(v)) . (grad_v g - t Da(v)^T grad_x g) on every node."""
    grid = g.grid
    shifted = shifted_force(field_eval, grid, t, model)
    if not np.any(shifted):
        return PhaseField(grid, np.zeros(grid.phase_shape))
    spec = sfft.rfftn(g.values)
    return PhaseField(grid, _rhs_from_spectrum(spec, grid, t, model, shifted))


# ---------------------------------------------------------------- stepping

@dataclass
class ProfileState:
    """Profile at time t together with the running correction integrals.

    ``field_zeroed`` switches the force off (free transport); ``support_tol``
    bounds |g| within two cells of the box edges relative to ``reference``
    (the initial peak).
    """

    t: float
    g: PhaseField
    model: TransportModel
    weights: WeightConfig = field(default_factory=WeightConfig)
    acc: CorrectionAccumulator | None = None
    field_zeroed: bool = False
    support_tol: float = 1e-10
    reference: float | None = None
    force_points: int = MAX_LATTICE
    _cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time must be nonnegative")
        if self.acc is None:
            self.acc = CorrectionAccumulator(self.g.grid, self.weights.N0)
        if self.reference is None:
            self.reference = float(np.max(np.abs(self.g.values)))

    def force(self, g: np.ndarray, t: float):
        """(shifted force, force lattice) for the profile values ``g`` at time ``t``."""
        grid = self.g.grid
        if self.field_zeroed or not np.any(g):
            return np.zeros((grid.d,) + grid.phase_shape), None
        rec = DensityReconstructor(g, grid, self.model)
        lat = build_force_lattice(rec, t, self.force_points)
        return lat.at_shifted(grid, t, self.model), lat

    def endpoint(self):
        """Shifted force and spectrum at the current time (cached between steps)."""
        if self._cache is not None and self._cache[0] == self.t:
            return self._cache[1], self._cache[2]
        shifted, _ = self.force(self.g.values, self.t)
        spec = sfft.rfftn(self.g.values) if np.any(shifted) else None
        self._cache = (self.t, shifted, spec)
        self._close_correction(shifted, spec)
        return shifted, spec

    def _close_correction(self, shifted, spec):
        if self.acc.last_t == self.t:
            return
        engine = DerivativeEngine(self.g.values, self.g.grid, max_order=max(self.weights.N0, 1),
                                  spectrum=spec if spec is not None else None)
        if not np.any(shifted):
            # zero force: the increment vanishes, only the bookkeeping advances
            zero = {a: np.zeros_like(v) for a, v in self.acc.values.items()}
            if self.acc.last_integrand is not None:
                for a in zero:
                    self.acc.values[a] = self.acc.values[a] + 0.5 * (self.t - self.acc.last_t) * self.acc.last_integrand[a]
            self.acc.last_t, self.acc.last_integrand = self.t, zero
            return
        accumulate_correction(self.acc, shifted, self.g, self.t, None, self.weights,
                              sign=-self.model.mu, engine=engine)

    def check(self, values: np.ndarray) -> None:
        if not np.isfinite(values).all():
            raise NonFiniteState(f"non-finite profile values at t={self.t}")
        grid = self.g.grid
        edge = max(position_boundary_max(values, grid, 2), velocity_boundary_max(values, grid, 2))
        if edge > self.support_tol * max(self.reference, np.finfo(float).tiny):
            raise SupportViolation(
                f"|g| = {edge:.3e} within two cells of the box edge exceeds "
                f"{self.support_tol:g} x initial peak at t={self.t}")


def step_profile(s: ProfileState, dt: float) -> ProfileState:
    """Explicit midpoint step; the correction integrals advance by the trapezoid rule."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid, model = s.g.grid, s.model
    shifted1, spec1 = s.endpoint()
    if spec1 is None:
        # no force: g is constant
        new = replace(s, t=s.t + dt, _cache=None)
        new.endpoint()
        return new
    k1 = _rhs_from_spectrum(spec1, grid, s.t, model, shifted1)
    gm = s.g.values + 0.5 * dt * k1
    del k1
    s.check(gm)
    tm = s.t + 0.5 * dt
    shiftedm, _ = s.force(gm, tm)
    k2 = _rhs_from_spectrum(sfft.rfftn(gm), grid, tm, model, shiftedm)
    del gm
    gn = s.g.values + dt * k2
    s.check(gn)
    new = replace(s, t=s.t + dt, g=PhaseField(grid, gn), _cache=None)
    new.endpoint()
    return new


def evolve(s: ProfileState, dt: float, steps: int, callback: Callable | None = None) -> ProfileState:
    """Take ``steps`` midpoint steps, calling ``callback(state)`` after each."""
    for _ in range(steps):
        s = step_profile(s, dt)
        if callback is not None:
            callback(s)
    return s
