"""Numerical probes of the decay lemma and the two bilinear estimates.

Frequency integrals are direct quadratures on tensor lattices in xi.  The
velocity integrals are node sums, so frequencies with |t xi_a| dv > pi are
dropped (the node sum aliases there; resolved data carry no weight there).
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import (DerivativeEngine, PhaseField, PhaseGrid, l2_norm_array, poly_weight, velocity_derivative,
                   zero_mode)
from .littlewood_paley import SymbolSpec, _fd_stencil, multi_indices, psi_k, shell_bounds, symbol_norm
from .reconstruction import _lagrange
from .transport import TransportModel, inverse_velocity_map, velocity_map

DEFAULT_K = 2
MAX_XI_POINTS = 64
PROBE_COLUMNS = ("lemma", "k", "t", "a", "model", "lhs", "rhs", "ratio", "truncation_order")


@dataclass
class ProbeReport:
    """Both sides of a probed estimate; ``k`` is ``"summed"`` for the decay lemma."""

    lemma: str
    t: float
    k: object
    a: float
    model: str
    lhs: float
    rhs: float
    truncation_order: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lhs < 0 or self.rhs < 0:
            raise ValueError("probe sides must be nonnegative")

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    def row(self) -> dict:
        return {"lemma": self.lemma, "k": self.k, "t": repr(float(self.t)), "a": repr(float(self.a)),
                "model": self.model, "lhs": f"{self.lhs:.17e}", "rhs": f"{self.rhs:.17e}",
                "ratio": f"{self.ratio:.17e}", "truncation_order": self.truncation_order}


def write_probe_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PROBE_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def spread(values) -> float:
    """max/min of a collection of positive ratios (inf if any is zero)."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        return math.nan
    lo = vals.min()
    return math.inf if lo <= 0 else float(vals.max() / lo)


# ---------------------------------------------------------------- xi lattices

@dataclass(frozen=True)
class XiLattice:
    """Tensor lattice ``centre + dxi * (i - n/2)`` per axis with a validity mask."""

    axis: np.ndarray
    mask: np.ndarray

    @property
    def dxi(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def d(self) -> int:
        return self.mask.ndim

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*([self.axis] * self.d), indexing="ij"), axis=-1)

    def norm(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.sqrt(sum(m * m for m in mesh))


def phase_spacing(grid: PhaseGrid, model: TransportModel | None = None) -> float:
    """Node spacing of the variable the phase is linear in (v, or w = a(v))."""
    if model is not None and model.relativistic:
        return 2.0 / grid.Nv
    return grid.dv


def resolved_bound(grid: PhaseGrid, t: float, model: TransportModel | None = None) -> float:
    """Largest |xi_a| represented by both the x-sum and the velocity node sum."""
    bound = np.pi / grid.dx
    if t != 0:
        bound = min(bound, np.pi / (abs(t) * phase_spacing(grid, model)))
    return bound


def reach(grid: PhaseGrid, t: float, model: TransportModel) -> float:
    """Per-axis half-width of the set x + t a(v)."""
    a = velocity_map(np.stack([grid.v_nodes] + [np.zeros(grid.Nv)] * (grid.d - 1), axis=-1), model)
    return 0.5 * grid.Lx + abs(t) * float(np.max(np.abs(a[:, 0])))


def _lattice(extent: float, R: float, d: int, bound: float, n_min: int = 16, n_max: int = MAX_XI_POINTS):
    """Lattice on [-extent, extent) whose period 2 pi / dxi covers 2R; returns (lattice, resolved)."""
    need = int(np.ceil(2 * extent * 2 * R / (2 * np.pi)))
    n = max(n_min, need + need % 2)
    resolved = n <= n_max
    n = min(n, n_max)
    axis = -extent + (2 * extent / n) * np.arange(n)
    ok = np.abs(axis) <= bound
    mask = np.ones((n,) * d, dtype=bool)
    for a in range(d):
        shape = [1] * d
        shape[a] = n
        mask = mask & ok.reshape(shape)
    return XiLattice(axis, mask), resolved


# ---------------------------------------------------------------- stream spectra

@dataclass
class VelocitySamples:
    """Velocity quadrature in the variable the phase is linear in.

    ``data`` has shape ``(n,)*d + spatial_shape`` on the tensor nodes
    ``nodes``; ``v`` holds the physical velocity of every node (n^d, d).
    """

    nodes: np.ndarray
    cell: float
    data: np.ndarray
    v: np.ndarray


def velocity_samples(values: np.ndarray, grid: PhaseGrid, model: TransportModel, weight=None,
                     order: int = 4) -> VelocitySamples:
    """Grid nodes for a(v) = v; for the relativistic law g(x, a^{-1}(w)) det Da^{-1}(w) on a w-grid.

    The substitution makes the phase linear in w, so the node sum needs no
    more than pi / (|t| dw) in frequency.  Values off the velocity grid come
    from tensor Lagrange interpolation of the given order.
    """
    d = grid.d
    if not model.relativistic:
        data = values
        vp = grid.v_points().reshape(-1, d)
        if weight is not None:
            wv = np.asarray(weight(grid.v_points()), dtype=float)
            data = values * wv.reshape(wv.shape + (1,) * d)
        return VelocitySamples(grid.v_nodes, grid.cell_v, data, vp)
    n = grid.Nv
    dw = 2.0 / n
    nodes = -1.0 + dw * (np.arange(n) + 0.5)
    wp = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    inside = np.sum(wp * wp, axis=1) < 1.0
    vp = np.zeros_like(wp)
    vp[inside] = inverse_velocity_map(wp[inside], model)
    keep = np.nonzero(inside & np.all(np.abs(vp) < grid.Vmax, axis=1))[0]
    out = np.zeros((n**d,) + grid.spatial_shape)
    gflat = values.reshape(grid.Nv**d, -1)
    offsets = np.array(list(itertools.product(range(order), repeat=d)))
    stride = np.array([grid.Nv ** (d - 1 - a) for a in range(d)])
    scale = (1.0 + np.sum(vp[keep] ** 2, axis=1)) ** ((d + 2) / 2.0)
    if weight is not None:
        scale = scale * np.asarray(weight(vp[keep]), dtype=float)
    chunk = max(1, 2**21 // (offsets.shape[0] * gflat.shape[1]))
    for start in range(0, len(keep), chunk):
        sel = keep[start:start + chunk]
        u = (vp[sel] - grid.v_nodes[0]) / grid.dv
        base = np.floor(u).astype(int) - (order // 2 - 1)
        lw = _lagrange(u - base, order)
        wt = np.ones((len(sel), offsets.shape[0]))
        idx = np.zeros((len(sel), offsets.shape[0]), dtype=np.int64)
        valid = np.ones_like(wt, dtype=bool)
        for a in range(d):
            ia = base[:, a, None] + offsets[None, :, a]
            valid &= (ia >= 0) & (ia < grid.Nv)
            wt *= lw[:, a, :][:, offsets[:, a]]
            idx += np.clip(ia, 0, grid.Nv - 1) * stride[a]
        wt = np.where(valid, wt, 0.0) * scale[start:start + chunk, None]
        vals = np.einsum("sp,spx->sx", wt, gflat[idx])
        out.reshape(n**d, -1)[sel] = vals
    return VelocitySamples(nodes, dw**d, out.reshape((n,) * d + grid.spatial_shape), vp)


def _tail_change(K: np.ndarray, lat: XiLattice, x: np.ndarray, bound: float, value: float) -> float:
    """Relative change of |sum| when the cut drops from ``bound`` to ``bound / 2``.

    Content near the cut signals content beyond it that the grid cannot see.
    """
    if value == 0:
        return 0.0
    inner = np.abs(lat.axis) <= 0.5 * bound
    mask = np.ones(K.shape, dtype=bool)
    for ax in range(lat.d):
        shape = [1] * lat.d
        shape[ax] = inner.size
        mask = mask & inner.reshape(shape)
    half = abs(_inverse_at(np.where(mask, K, 0.0), lat, x)[0])
    return abs(half - value) / value


def _pairs(data: np.ndarray, n: int, grid: PhaseGrid) -> np.ndarray:
    """Velocity-major array -> (v0 x0, v1 x1, ...) pair layout."""
    d = grid.d
    perm = []
    for a in range(d):
        perm += [a, d + a]
    return np.transpose(data, perm).reshape((n * grid.Nx,) * d)


def stream_spectrum(samples: VelocitySamples, grid: PhaseGrid, tau: float, lat: XiLattice,
                    joint=None) -> np.ndarray:
    """S(xi) = sum_u cell_u exp(-i tau u.xi) m(xi, u) sum_x cell_x exp(-i x.xi) h(x, u).

    ``u`` runs over the sample nodes (phase-linear variable); ``joint(xi, v)``
    is an optional factor coupling xi and the physical velocity.
    """
    d = grid.d
    xi = lat.axis
    n = xi.size
    if joint is None:
        # sum over (u_a, x_a) pairs of exp(-i xi_a (x_a + tau u_a)), axis by axis
        pair = (samples.nodes[:, None] * tau + grid.x_nodes[None, :]).reshape(-1)
        M = np.exp(-1j * np.outer(xi, pair))  # (n, P)
        A = _pairs(samples.data, samples.nodes.size, grid).astype(complex)
        for _ in range(d):
            A = np.tensordot(A, M, axes=([0], [1]))
        S = A
    else:
        Ex = np.exp(-1j * np.outer(xi, grid.x_nodes))  # (n, Nx)
        up = np.stack(np.meshgrid(*([samples.nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
        flat = samples.data.reshape(-1, *grid.spatial_shape)
        S = np.zeros((n,) * d, dtype=complex)
        xi_pts = lat.points()
        chunk = max(1, 2**20 // n**d)
        for start in range(0, len(up), chunk):
            blk = flat[start:start + chunk].astype(complex)
            for _ in range(d):
                blk = np.tensordot(blk, Ex, axes=([1], [1]))  # consume x axis, append xi
            for a in range(d):
                shape = [blk.shape[0]] + [1] * d
                shape[1 + a] = n
                blk = blk * np.exp(-1j * tau * np.outer(up[start:start + chunk, a], xi)).reshape(shape)
            for j in range(blk.shape[0]):
                blk[j] *= joint(xi_pts, samples.v[start + j])
            S += blk.sum(axis=0)
    S = S * (grid.cell_x * samples.cell)
    return np.where(lat.mask, S, 0.0)


def _inverse_at(K: np.ndarray, lat: XiLattice, points: np.ndarray) -> np.ndarray:
    """sum_xi dxi^d exp(i x.xi) K(xi) at points (m, d)."""
    d = lat.d
    out = np.zeros(len(points), dtype=complex)
    flat = K.reshape(-1)
    mesh = [m.reshape(-1) for m in np.meshgrid(*([lat.axis] * d), indexing="ij")]
    for start in range(0, len(points), 64):
        p = points[start:start + 64]
        ph = np.exp(1j * sum(np.outer(p[:, a], mesh[a]) for a in range(d)))
        out[start:start + 64] = ph @ flat
    return out * lat.dxi**d


# ---------------------------------------------------------------- norms

def _vel_l1(m: np.ndarray, grid: PhaseGrid, power: float) -> float:
    w = (1.0 + np.sqrt(sum(c * c for c in grid.v_mesh()))) ** power
    return float(grid.cell_v * np.sum(w * np.abs(m)))


def _phase_l1(values: np.ndarray, grid: PhaseGrid, vpow: float, xpow: float) -> float:
    d = grid.d
    vw = (1.0 + np.sqrt(sum(c * c for c in grid.v_mesh()))) ** vpow
    xw = (1.0 + np.sqrt(sum(c * c for c in grid.x_mesh()))) ** xpow
    tot = vw.reshape(-1) @ (np.abs(values).reshape(vw.size, xw.size) @ xw.reshape(-1))
    return float(grid.cell_v * grid.cell_x * tot)


def _phase_weighted_l2(values: np.ndarray, grid: PhaseGrid, power: float) -> float:
    return l2_norm_array(values, grid, poly_weight(power))


def _v_derivatives(values: np.ndarray, grid: PhaseGrid, order: int):
    """Yield d_v^alpha of a phase array for every |alpha| <= order."""
    eng = DerivativeEngine(values, grid, max_order=max(order, 1))
    for alpha in multi_indices(grid.d, order):
        yield alpha, eng.mixed((0,) * grid.d, alpha)


# ---------------------------------------------------------------- symbol prefactors

PREFACTOR_SHELLS = (-2, 0, 2)


def _symbol_at_v(spec: SymbolSpec, v, beta, h: float = 1e-3):
    """xi -> d_v^beta m(xi, v) by central differences in v."""
    if sum(beta) == 0:
        return lambda xi, _v=None: spec.m(xi, v)
    stencils = [_fd_stencil(b) for b in beta]

    def f(xi, _v=None):
        out = 0.0
        for combo in itertools.product(*stencils):
            shift = np.array([o for o, _ in combo], dtype=float) * h
            w = np.prod([wt for _, wt in combo]) / h ** sum(beta)
            out = out + w * np.asarray(spec.m(xi, np.asarray(v) + shift))
        return out

    return f


def symbol_prefactor(spec: SymbolSpec, order: int, d: int, shells=None, v_samples=None) -> float:
    """sum_{|beta| <= order} sup over shells and velocity samples of ||d_v^beta m||_{S_k}."""
    shells = PREFACTOR_SHELLS if shells is None else shells
    if not spec.v_dependent:
        return max(symbol_norm(spec, k, d=d) for k in shells)
    v_samples = [np.zeros(d)] if v_samples is None else v_samples
    total = 0.0
    for beta in multi_indices(d, order):
        best = 0.0
        for v in v_samples:
            m = _symbol_at_v(spec, v, beta)
            best = max(best, max(symbol_norm(m, k, d=d) for k in shells))
        total += best
    return total


# ---------------------------------------------------------------- decay lemma

@dataclass
class DecayNorms:
    """t-independent pieces of the decay estimate's right side.

    ``zero_mode[j]`` and ``phase[j]`` are the weighted L1 norms of the j-th
    velocity derivative of g_hat(0, v) and of g.
    """

    order: int
    full_order: int
    zero_mode: list
    phase: list
    prefactor: float

    def rhs(self, t: float, a: float) -> float:
        s = sum(abs(t) ** (-3 - a) * A + abs(t) ** (-4 - a) * B for A, B in zip(self.zero_mode, self.phase))
        return self.prefactor * s


def decay_norms(g: PhaseField, a: float, m: SymbolSpec, max_order: int = DEFAULT_K) -> DecayNorms:
    grid, d = g.grid, g.grid.d
    full_order = 5 + math.floor(a)
    order = max(0, min(full_order, max_order))
    vpow = 5 + abs(a)
    mz = zero_mode(g.values, grid)
    A, B = [], []
    for alpha, dg in _v_derivatives(g.values, grid, order):
        A.append(_vel_l1(velocity_derivative(mz, grid, alpha), grid, vpow))
        B.append(_phase_l1(dg, grid, vpow, 1.0))
    return DecayNorms(order, full_order, A, B, symbol_prefactor(m, order, d))


def decay_probe(g: PhaseField, t: float, a: float, m: SymbolSpec, model: TransportModel, x,
                max_order: int = DEFAULT_K, n_max: int = MAX_XI_POINTS, norms: DecayNorms | None = None,
                samples: VelocitySamples | None = None) -> ProbeReport:
    """Both sides of the dispersive decay estimate for the profile ``g``.

    LHS = |int int exp(i x.xi - i t a(v).xi) m(xi, v) |xi|^a g_hat(xi, v) dv dxi|.
    ``norms`` and ``samples`` may be precomputed for sweeps over t.
    """
    if abs(t) < 1:
        raise ValueError("the decay estimate needs |t| >= 1")
    if not a > -3:
        raise ValueError("exponent a must exceed -3")
    grid, d = g.grid, g.grid.d
    x = np.asarray(x, dtype=float).reshape(1, d)
    bound = resolved_bound(grid, t, model)
    lat, resolved = _lattice(bound, reach(grid, t, model) + float(np.max(np.abs(x))), d, bound,
                             n_max=n_max)
    joint = (lambda xi, u: m.m(xi, u)) if m.v_dependent else None
    samples = velocity_samples(g.values, grid, model) if samples is None else samples
    r = lat.norm()
    fac = np.where(r > 0, r, 1.0) ** a
    fac = np.where(r > 0, fac, 1.0 if a == 0 else 0.0)
    if not m.v_dependent:
        fac = fac * np.asarray(m.m(lat.points(), None))
    K = stream_spectrum(samples, grid, t, lat, joint=joint) * fac
    lhs = abs(_inverse_at(K, lat, x)[0])
    tail = _tail_change(K, lat, x, bound, lhs)
    norms = decay_norms(g, a, m, max_order) if norms is None else norms
    meta = {"resolved": bool(resolved), "xi_points": lat.axis.size,
            "full_order": norms.full_order, "tail": float(tail)}
    return ProbeReport("3.1", float(t), "summed", float(a), model.law, float(lhs), float(norms.rhs(t, a)),
                       norms.order, meta)


# ---------------------------------------------------------------- bilinear operator

def _shell_lattice(grid: PhaseGrid, k: int, t: float, model: TransportModel, n_max: int):
    extent = 2.0 ** (k + 1)
    R = reach(grid, t, model) + 4.0 / 2.0**k  # evaluation range plus the shell kernel's width
    return _lattice(extent, R, grid.d, resolved_bound(grid, t, model), n_max=n_max)


def field_E(f2: PhaseField, k: int, t: float, spec: SymbolSpec, model: TransportModel,
            n_max: int = MAX_XI_POINTS, samples: VelocitySamples | None = None):
    """Shell multiplier spectrum of E(P_k f2): returns (K(xi), lattice, resolved)."""
    grid = f2.grid
    lo, _ = shell_bounds(k)
    if lo > resolved_bound(grid, t, model) * np.sqrt(grid.d):
        warnings.warn(f"shell k={k} lies beyond the resolved frequencies", RuntimeWarning, stacklevel=2)
    lat, resolved = _shell_lattice(grid, k, t, model, n_max)
    joint = (lambda xi, u: spec.m(xi, u)) if spec.v_dependent else None
    samples = velocity_samples(f2.values, grid, model, spec.c) if samples is None else samples
    S = stream_spectrum(samples, grid, model.mu * t, lat, joint=joint)
    K = S * psi_k(k, lat.norm())
    if not spec.v_dependent:
        K = K * np.asarray(spec.m(lat.points(), None))
    return K, lat, resolved


def evaluate_shifted(K: np.ndarray, lat: XiLattice, grid: PhaseGrid, t: float, model: TransportModel) -> np.ndarray:
    """E(x + a(v) t) on every phase node (velocity-major), E = sum dxi^d exp(i y.xi) K."""
    d = grid.d
    xi = lat.axis
    if not model.relativistic:
        pair = (grid.v_nodes[:, None] * t + grid.x_nodes[None, :]).reshape(-1)
        N = np.exp(1j * np.outer(pair, xi))  # (P, n)
        A = K
        for _ in range(d):
            A = np.tensordot(A, N, axes=([0], [1]))
        A = A.real.reshape((grid.Nv, grid.Nx) * d)
        perm = [2 * a for a in range(d)] + [2 * a + 1 for a in range(d)]
        return np.ascontiguousarray(np.transpose(A, perm)) * lat.dxi**d
    vp = grid.v_points().reshape(-1, d)
    shift = t * velocity_map(vp, model)
    out = np.empty((len(vp),) + grid.spatial_shape)
    for j in range(len(vp)):
        A = K
        for a in range(d):
            N = np.exp(1j * np.outer(grid.x_nodes + shift[j, a], xi))
            A = np.tensordot(A, N, axes=([0], [1]))
        out[j] = A.real
    return out.reshape(grid.phase_shape) * lat.dxi**d


def bilinear_Bk(f1: PhaseField, f2: PhaseField, k: int, t: float, spec: SymbolSpec, model: TransportModel,
                n_max: int = MAX_XI_POINTS) -> PhaseField:
    """B_k(f1, f2)(x, v) = f1(x, v) E(P_k f2)(x + a(v) t)."""
    if f1.grid != f2.grid:
        raise ValueError("inputs live on different grids")
    K, lat, _ = field_E(f2, k, t, spec, model, n_max)
    E = evaluate_shifted(K, lat, f1.grid, t, model)
    return PhaseField(f1.grid, f1.values * E)


def _c_grad_abs(c, v: np.ndarray, h: float = 1e-5) -> np.ndarray:
    d = v.shape[-1]
    comps = []
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        comps.append((np.asarray(c(v + e)) - np.asarray(c(v - e))) / (2 * h))
    return np.sqrt(sum(np.abs(cc) ** 2 for cc in comps))


@dataclass
class BilinearNorms:
    """k- and t-independent norms of the bilinear right sides."""

    order: int
    f1: float  # sum_alpha ||(1+|v|+|x|)^20 d_v^alpha f1||
    cf2: float  # ||(1+|v|+|x|)^20 c f2||
    f3_term: float  # ||(|c| + |grad c|) |f3| ||_{L2_v}
    zero_mode_term: float  # ||c (f2_hat(0, v) - div_v f3)||_{L2_v}


def bilinear_norms(f1: PhaseField, f2: PhaseField, f3, spec: SymbolSpec, max_order: int = DEFAULT_K) -> BilinearNorms:
    grid, d = f1.grid, f1.grid.d
    order = min(5, max_order)
    f1_norm = sum(_phase_weighted_l2(df, grid, 20.0) for _, df in _v_derivatives(f1.values, grid, order))
    vpts = grid.v_points()
    cv = np.asarray(spec.c(vpts), dtype=float)
    cf2 = _phase_weighted_l2(f2.values * cv.reshape(cv.shape + (1,) * d), grid, 20.0)
    f3 = np.zeros(grid.velocity_shape + (d,)) if f3 is None else np.asarray(f3, dtype=float)
    if f3.shape != grid.velocity_shape + (d,):
        raise ValueError(f"f3 must have shape {grid.velocity_shape + (d,)}")
    f3abs = np.sqrt(np.sum(f3**2, axis=-1))
    t1 = float(np.sqrt(grid.cell_v * np.sum(((np.abs(cv) + _c_grad_abs(spec.c, vpts)) * f3abs) ** 2)))
    div = sum(velocity_derivative(f3[..., c], grid, tuple(int(c == j) for j in range(d))) for c in range(d))
    t3 = float(np.sqrt(grid.cell_v * np.sum((cv * (zero_mode(f2.values, grid) - div)) ** 2)))
    return BilinearNorms(order, float(f1_norm), float(cf2), t1, t3)


def bilinear_probe(f1: PhaseField, f2: PhaseField, f3, k: int, t: float, spec: SymbolSpec,
                   model: TransportModel, lemma: str = "3.3", max_order: int = DEFAULT_K,
                   n_max: int = MAX_XI_POINTS, norms: BilinearNorms | None = None,
                   samples: VelocitySamples | None = None) -> ProbeReport:
    """LHS = ||B_k(f1, f2)||_{L2}; RHS assembled from the norms of the chosen estimate.

    ``f3`` is a velocity vector field (velocity_shape + (d,)) or None (zero).
    """
    grid, d = f1.grid, f1.grid.d
    lemma = str(lemma)
    if lemma not in ("3.2", "3.3"):
        raise ValueError("lemma must be '3.2' or '3.3'")
    if abs(t) < 1:
        raise ValueError("the bilinear estimates need |t| >= 1")
    if lemma == "3.2" and k not in admissible_k(t):
        raise ValueError(f"k={k} outside the admissible range 1/|t| <= 2^k <= 1 for t={t}")
    if f1.grid != f2.grid:
        raise ValueError("inputs live on different grids")
    K, lat, resolved = field_E(f2, k, t, spec, model, n_max, samples)
    E = evaluate_shifted(K, lat, grid, t, model)
    lhs = l2_norm_array(f1.values * E, grid)
    nb = bilinear_norms(f1, f2, f3, spec, max_order) if norms is None else norms
    m_k = symbol_prefactor(spec, 0, d, [k])
    if lemma == "3.3":
        rhs = min(abs(t) ** -3, 2.0 ** (3 * k)) * m_k * nb.cf2 * nb.f1
    else:
        dm_k = symbol_prefactor(spec, 1, d, [k]) - m_k if spec.v_dependent else 0.0
        bracket = (abs(t) ** -2 * 2.0**k * nb.f3_term + abs(t) ** -3 * 2.0**k * nb.cf2
                   + abs(t) ** -3 * nb.zero_mode_term)
        rhs = (m_k + dm_k) * nb.f1 * bracket
    return ProbeReport(lemma, float(t), int(k), 0.0, model.law, float(lhs), float(rhs), nb.order,
                       {"resolved": resolved, "xi_points": lat.axis.size,
                        "shell_resolved": bool(shell_bounds(k)[0] <= resolved_bound(grid, t, model))})


def admissible_k(t: float) -> list:
    """Shells with 1/|t| <= 2^k <= 1."""
    lo = math.ceil(math.log2(1.0 / abs(t)) - 1e-12)
    return list(range(lo, 1))


# ---------------------------------------------------------------- sweeps

def decay_sweep(g: PhaseField, times, a_values, models, spec: SymbolSpec | None = None, x=None,
                max_order: int = DEFAULT_K) -> list:
    spec = SymbolSpec() if spec is None else spec
    x = np.zeros(g.grid.d) if x is None else x
    norms = {a: decay_norms(g, a, spec, max_order) for a in a_values}
    out = []
    for m in models:
        samples = velocity_samples(g.values, g.grid, m)
        for a in a_values:
            for t in times:
                out.append(decay_probe(g, t, a, spec, m, x, max_order, norms=norms[a], samples=samples))
    return out


def bilinear_sweep(f1: PhaseField, f2: PhaseField, ks, times, model: TransportModel, lemma: str = "3.3",
                   spec: SymbolSpec | None = None, f3=None, max_order: int = DEFAULT_K) -> list:
    """Probe every (k, t); ``ks=None`` with lemma 3.2 uses each t's admissible shells."""
    spec = SymbolSpec() if spec is None else spec
    norms = bilinear_norms(f1, f2, f3, spec, max_order)
    samples = velocity_samples(f2.values, f2.grid, model, spec.c)
    out = []
    for t in times:
        kk = admissible_k(t) if ks is None else ks
        for k in kk:
            out.append(bilinear_probe(f1, f2, f3, k, t, spec, model, lemma, max_order, norms=norms,
                                      samples=samples))
    return out
