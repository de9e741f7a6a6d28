"""Tensor phase-space grids and the spectral operations built on them.

Arrays are stored velocity-major: a phase-space array has shape
``(Nv,)*d + (Nx,)*d`` so that transforms in position act on contiguous
trailing slices.  The Fourier convention is

    u_hat(xi) = int exp(-i x.xi) u(x) dx,

with the factor (2 pi)^-d carried by the inverse.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.fft as sfft

DEFAULT_MAX_ORDER = 4
SLAB_BUDGET = 2**24  # complex entries per processing slab

MAGIC = b"VPF1"
_HEADER = struct.Struct("<4sqqqdd")


def _is_pow2(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform grid on ``[-Lx/2, Lx/2)^d x [-Vmax, Vmax)^d``.

    Attributes:
        d: spatial dimension (1, 2 or 3).
        Nx, Nv: points per position / velocity axis (powers of two, >= 4).
        Lx: edge length of the position box.
        Vmax: half-width of the velocity box.
    """

    d: int
    Nx: int
    Nv: int
    Lx: float
    Vmax: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d must be 1, 2 or 3, got {self.d}")
        for name in ("Nx", "Nv"):
            n = getattr(self, name)
            if not _is_pow2(n) or n < 4:
                raise ValueError(f"{name}={n} must be a power of two >= 4 (FFT-compatible grid)")
        if not (np.isfinite(self.Lx) and self.Lx > 0):
            raise ValueError(f"Lx must be positive, got {self.Lx}")
        if not (np.isfinite(self.Vmax) and self.Vmax > 0):
            raise ValueError(f"Vmax must be positive, got {self.Vmax}")
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Vmax", float(self.Vmax))

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dv(self) -> float:
        return 2.0 * self.Vmax / self.Nv

    @property
    def cell_x(self) -> float:
        return self.dx**self.d

    @property
    def cell_v(self) -> float:
        return self.dv**self.d

    @property
    def x_nodes(self) -> np.ndarray:
        return -0.5 * self.Lx + self.dx * np.arange(self.Nx)

    @property
    def v_nodes(self) -> np.ndarray:
        return -self.Vmax + self.dv * np.arange(self.Nv)

    @property
    def kx(self) -> np.ndarray:
        """Angular wavenumbers of the position axes (FFT order)."""
        return 2 * np.pi * np.fft.fftfreq(self.Nx, d=self.dx)

    @property
    def kv(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.Nv, d=self.dv)

    @property
    def spatial_shape(self) -> tuple:
        return (self.Nx,) * self.d

    @property
    def velocity_shape(self) -> tuple:
        return (self.Nv,) * self.d

    @property
    def phase_shape(self) -> tuple:
        return self.velocity_shape + self.spatial_shape

    @property
    def x_axes(self) -> tuple:
        return tuple(range(self.d, 2 * self.d))

    @property
    def v_axes(self) -> tuple:
        return tuple(range(self.d))

    def x_mesh(self) -> list:
        """Open mesh of position coordinates (broadcastable, spatial shape)."""
        return list(np.ix_(*([self.x_nodes] * self.d)))

    def v_mesh(self) -> list:
        return list(np.ix_(*([self.v_nodes] * self.d)))

    def v_points(self) -> np.ndarray:
        """All velocity nodes as an array of shape ``velocity_shape + (d,)``."""
        mesh = np.meshgrid(*([self.v_nodes] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def x_points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.x_nodes] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)


def build_grid(d: int, Nx: int, Nv: int, Lx: float, Vmax: float) -> PhaseGrid:
    """Validated grid constructor."""
    return PhaseGrid(int(d), int(Nx), int(Nv), float(Lx), float(Vmax))


@dataclass(frozen=True)
class PhaseField:
    """Real phase-space samples on ``grid`` (velocity axes first)."""

    grid: PhaseGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.phase_shape:
            raise ValueError(f"shape {vals.shape} does not match grid {self.grid.phase_shape}")
        if not np.isfinite(vals).all():
            raise ValueError("phase field contains non-finite entries")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SpatialField:
    """Samples on the position grid; complex values allowed for spectral data."""

    grid: PhaseGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if not np.iscomplexobj(vals):
            vals = vals.astype(float, copy=False)
        if vals.shape != self.grid.spatial_shape:
            raise ValueError(f"shape {vals.shape} does not match grid {self.grid.spatial_shape}")
        if not np.isfinite(vals).all():
            raise ValueError("spatial field contains non-finite entries")
        object.__setattr__(self, "values", vals)


# ---------------------------------------------------------------- helpers

def slabs(n0: int, per_item: int, budget: int = SLAB_BUDGET) -> Iterator[slice]:
    """Contiguous slices of the leading axis, each holding at most ``budget`` entries."""
    step = max(1, budget // max(per_item, 1))
    for start in range(0, n0, step):
        yield slice(start, min(start + step, n0))


def axis_multiplier(k: np.ndarray, order: int = 0, shift: float | np.ndarray | None = None) -> np.ndarray:
    """Per-axis Fourier factor ``(ik)^order * exp(ik*shift)`` with a real Nyquist bin.

    The Nyquist bin receives ``0`` for odd orders and ``cos(k_N*shift)`` for the
    shift so that real data stay real.  ``shift`` may be an array; its
    shape is prepended.
    """
    n = k.size
    mult = (1j * k) ** order if order else np.ones(n, dtype=complex)
    if order % 2 == 1 and n % 2 == 0:
        mult = mult.copy()
        mult[n // 2] = 0.0
    if shift is None:
        return mult
    s = np.asarray(shift, dtype=float)[..., None]
    phase = np.exp(1j * k * s)
    if n % 2 == 0:
        phase[..., n // 2] = np.cos(k[n // 2] * s[..., 0])
    return mult * phase


def _rfft_k(k: np.ndarray) -> np.ndarray:
    """Wavenumbers of the halved last axis of an rfft."""
    n = k.size
    return np.abs(k[: n // 2 + 1])


def _half_multiplier(full: np.ndarray, n: int) -> np.ndarray:
    return full[..., : n // 2 + 1]


def apply_multipliers(values: np.ndarray, axes: Sequence[int], factors: Sequence[np.ndarray]) -> np.ndarray:
    """Apply a separable Fourier multiplier along ``axes`` of a real array.

    ``factors[j]`` has the FFT-ordered length of ``axes[j]`` and may carry
    extra leading dimensions that broadcast against the remaining axes
    (they are aligned to the leading dimensions of ``values``).
    """
    axes = list(axes)
    spec = sfft.rfftn(values, axes=axes)
    for j, (ax, fac) in enumerate(zip(axes, factors)):
        n = values.shape[ax]
        f = _half_multiplier(fac, n) if j == len(axes) - 1 else fac
        spec *= _expand(f, spec.ndim, ax)
    return sfft.irfftn(spec, s=[values.shape[a] for a in axes], axes=axes)


def _expand(fac: np.ndarray, ndim: int, ax: int) -> np.ndarray:
    """Reshape a factor with leading batch dims so that its last dim lands on ``ax``."""
    lead = fac.shape[:-1]
    shape = list(lead) + [1] * (ndim - len(lead))
    shape[ax] = fac.shape[-1]
    return fac.reshape(shape)


# ---------------------------------------------------------------- moments

def density_array(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    out = np.zeros(grid.spatial_shape)
    per = int(np.prod(values.shape[1:]))
    for sl in slabs(values.shape[0], per):
        out += values[sl].sum(axis=tuple(range(grid.d)))
    return grid.cell_v * out


def density(f: PhaseField) -> SpatialField:
    """rho(x) = dv^d * sum_v f(x, v)."""
    return SpatialField(f.grid, density_array(f.values, f.grid))


def zero_mode(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """m(v) = dx^d sum_x g(x, v), i.e. g_hat(0, v) in the fixed convention."""
    return grid.cell_x * values.sum(axis=grid.x_axes)


# ---------------------------------------------------------------- derivatives

def _check_order(alpha: Sequence[int], max_order: int) -> tuple:
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative derivative order in {alpha}")
    if sum(alpha) > max_order:
        raise ValueError(f"|alpha|={sum(alpha)} exceeds the maximum order {max_order} (aliasing risk)")
    return alpha


def derivative_array(values: np.ndarray, grid: PhaseGrid, alpha: Sequence[int], space: str = "position",
                     max_order: int = DEFAULT_MAX_ORDER) -> np.ndarray:
    """Spectral derivative of a spatial or phase array (see :func:`spectral_derivative`)."""
    d = grid.d
    alpha = _check_order(alpha, max_order)
    if len(alpha) != d:
        raise ValueError(f"multi-index {alpha} has wrong length for d={d}")
    if sum(alpha) == 0:
        return np.array(values, dtype=float, copy=True)
    if values.shape == grid.spatial_shape:
        if space != "position":
            raise ValueError("velocity derivatives need a phase-space array")
        axes, k = tuple(range(d)), grid.kx
    elif values.shape == grid.phase_shape:
        axes, k = (grid.x_axes, grid.kx) if space == "position" else (grid.v_axes, grid.kv)
    else:
        raise ValueError(f"array shape {values.shape} does not fit the grid")
    factors = [axis_multiplier(k, a) for a in alpha]
    if values.shape == grid.phase_shape and space == "position":
        out = np.empty_like(values, dtype=float)
        per = int(np.prod(values.shape[1:]))
        for sl in slabs(values.shape[0], per):
            out[sl] = apply_multipliers(values[sl], axes, factors)
        return out
    return apply_multipliers(values, axes, factors)


def spectral_derivative(u, alpha: Sequence[int], space: str = "position", max_order: int = DEFAULT_MAX_ORDER):
    """Fourier derivative ``(i k)^alpha`` along position or velocity axes.

    Parameters
    ----------
    u : SpatialField or PhaseField
    alpha : multi-index of length d
    space : "position" or "velocity"
    max_order : largest admissible ``|alpha|``
    """
    vals = derivative_array(u.values, u.grid, alpha, space, max_order)
    return type(u)(u.grid, vals)


# ---------------------------------------------------------------- interpolation

def shift_array(values: np.ndarray, grid: PhaseGrid, offset: np.ndarray) -> np.ndarray:
    """Return ``u(x + offset(v), v)`` by per-velocity phase shifts in x.

    ``offset`` has shape ``velocity_shape + (d,)`` (or ``(d,)`` for a uniform shift).
    """
    d = grid.d
    offset = np.asarray(offset, dtype=float)
    if offset.shape == (d,):
        offset = np.broadcast_to(offset, grid.velocity_shape + (d,))
    if offset.shape != grid.velocity_shape + (d,):
        raise ValueError(f"offset shape {offset.shape} incompatible with grid")
    if not np.isfinite(offset).all():
        raise ValueError("offsets must be finite")
    out = np.empty(values.shape, dtype=float)
    per = int(np.prod(values.shape[1:]))
    k = grid.kx
    for sl in slabs(values.shape[0], per):
        off = offset[sl]
        factors = [axis_multiplier(k, 0, off[..., a]) for a in range(d)]
        out[sl] = apply_multipliers(values[sl], grid.x_axes, factors)
    return out


def interpolate(u: PhaseField, offset: np.ndarray, space: str = "position") -> PhaseField:
    """Evaluate ``u(x + offset(v), v)`` on the nodes via Fourier phase shifts."""
    if space != "position":
        raise ValueError("only position-space interpolation is supported")
    return PhaseField(u.grid, shift_array(u.values, u.grid, offset))


# ---------------------------------------------------------------- norms

def sup_norm(u) -> float:
    vals = u.values if hasattr(u, "values") else np.asarray(u)
    return float(np.max(np.abs(vals))) if vals.size else 0.0


WeightFn = Callable[[list, list], np.ndarray]


def l2_norm_array(values: np.ndarray, grid: PhaseGrid, weight: WeightFn | None = None) -> float:
    """sqrt(cell volume * sum w^2 u^2), reduced slab by slab in a fixed order.

    ``weight(x, v)`` receives open meshes (lists of broadcastable coordinate
    arrays); for spatial arrays ``v`` is an empty list.
    """
    if values.shape == grid.spatial_shape:
        w = 1.0 if weight is None else weight(grid.x_mesh(), [])
        return float(np.sqrt(grid.cell_x * np.sum((w * values) ** 2)))
    if values.shape != grid.phase_shape:
        raise ValueError("array does not fit the grid")
    d = grid.d
    xs = [c.reshape((1,) * d + c.shape) for c in grid.x_mesh()]
    vs_full = [c.reshape(c.shape + (1,) * d) for c in grid.v_mesh()]
    per = int(np.prod(values.shape[1:]))
    partial = []
    for sl in slabs(values.shape[0], per):
        blk = values[sl]
        if weight is not None:
            vs = [vs_full[0][sl]] + vs_full[1:]
            blk = weight(xs, vs) * blk
        partial.append(np.sum(blk * blk))
    return float(np.sqrt(grid.cell_x * grid.cell_v * np.sum(partial)))


def l2_norm(u, weight: WeightFn | None = None) -> float:
    """Weighted L2 norm of a PhaseField or SpatialField."""
    return l2_norm_array(u.values, u.grid, weight)


def poly_weight(power: float) -> WeightFn:
    """The weight ``(1 + |v| + |x|)^power``."""

    def w(x, v):
        r = 1.0
        if x:
            r = r + np.sqrt(sum(c * c for c in x))
        if v:
            r = r + np.sqrt(sum(c * c for c in v))
        return np.asarray(r, dtype=float) ** power

    return w


def velocity_l2(m: np.ndarray, grid: PhaseGrid, power: float = 0.0) -> float:
    """Weighted L2 norm of a velocity function with weight ``(1+|v|)^power``."""
    vabs = np.sqrt(sum(c * c for c in grid.v_mesh()))
    w = (1.0 + vabs) ** power
    m = np.asarray(m)
    if m.ndim > grid.d:  # vector-valued, components last
        wm = (w[..., None] * m)
    else:
        wm = w * m
    return float(np.sqrt(grid.cell_v * np.sum(np.abs(wm) ** 2)))


# ---------------------------------------------------------------- Fourier helpers

def fourier_x(values: np.ndarray, grid: PhaseGrid, axes: Sequence[int] | None = None) -> np.ndarray:
    """Continuous-convention transform in x: ``dx^d * exp(i k Lx/2) * FFT``."""
    axes = tuple(axes) if axes is not None else tuple(range(values.ndim - grid.d, values.ndim))
    spec = sfft.fftn(values, axes=axes)
    phase = np.exp(0.5j * grid.kx * grid.Lx)
    for ax in axes:
        spec *= _expand(phase, spec.ndim, ax)
    return grid.cell_x * spec


def velocity_boundary_max(values: np.ndarray, grid: PhaseGrid, cells: int = 1) -> float:
    """Largest |value| within ``cells`` nodes of the velocity box boundary."""
    return _boundary_max(values, grid.v_axes, cells)


def position_boundary_max(values: np.ndarray, grid: PhaseGrid, cells: int = 1) -> float:
    return _boundary_max(values, grid.x_axes, cells)


def _boundary_max(values: np.ndarray, axes, cells: int) -> float:
    best = 0.0
    for ax in axes:
        n = values.shape[ax]
        idx = list(range(cells)) + list(range(n - cells, n))
        best = max(best, float(np.max(np.abs(np.take(values, idx, axis=ax)))))
    return best


# ---------------------------------------------------------------- VPF1 snapshots

def write_snapshot(path, f: PhaseField) -> None:
    """Write ``f`` in the VPF1 binary format."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.d, g.Nx, g.Nv, g.Lx, g.Vmax))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path, boundary_tol: float | None = None) -> PhaseField:
    """Read a VPF1 snapshot.

    If ``boundary_tol`` is given, data exceeding ``boundary_tol * max|f|`` on
    the velocity boundary is rejected.
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated VPF1 header")
        magic, d, nx, nv, lx, vmax = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        grid = build_grid(d, nx, nv, lx, vmax)
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = int(np.prod(grid.phase_shape))
    if data.size != n:
        raise ValueError(f"VPF1 payload has {data.size} values, expected {n}")
    vals = data.reshape(grid.phase_shape).astype(float)
    if boundary_tol is not None:
        peak = float(np.max(np.abs(vals))) if vals.size else 0.0
        if velocity_boundary_max(vals, grid) > boundary_tol * peak:
            raise ValueError("data does not decay at the velocity boundary")
    return PhaseField(grid, vals)


def velocity_derivative(m: np.ndarray, grid: PhaseGrid, beta: Sequence[int]) -> np.ndarray:
    """Spectral derivative of a velocity function (velocity axes first, extra axes trailing)."""
    beta = tuple(int(b) for b in beta)
    if sum(beta) == 0:
        return np.array(m, dtype=float, copy=True)
    factors = [axis_multiplier(grid.kv, b) for b in beta]
    return apply_multipliers(np.asarray(m, dtype=float), tuple(range(grid.d)), factors)


class DerivativeEngine:
    """Mixed derivatives d_x^alpha d_v^beta of one phase-space array.

    Small arrays keep a single full-phase-space spectrum; large ones are
    differentiated slab by slab to bound memory.
    """

    def __init__(self, values: np.ndarray, grid: PhaseGrid, max_order: int = DEFAULT_MAX_ORDER,
                 full_limit: int = 2**25, spectrum: np.ndarray | None = None):
        self.values = values
        self.grid = grid
        self.max_order = max_order
        self._spec = spectrum
        if spectrum is None and values.size <= full_limit:
            self._spec = sfft.rfftn(values)

    @property
    def spectrum(self) -> np.ndarray | None:
        """Full phase-space rfft (None for slab mode)."""
        return self._spec

    def mixed(self, alpha: Sequence[int], beta: Sequence[int]) -> np.ndarray:
        grid, d = self.grid, self.grid.d
        alpha, beta = tuple(alpha), tuple(beta)
        _check_order(alpha + beta, self.max_order)
        if sum(alpha) + sum(beta) == 0:
            return self.values
        if self._spec is not None:
            facs = [axis_multiplier(grid.kv, b) for b in beta] + [axis_multiplier(grid.kx, a) for a in alpha]
            spec = self._spec.copy()
            for ax, f in enumerate(facs):
                if ax == 2 * d - 1:
                    f = f[: grid.Nx // 2 + 1]
                spec *= _expand(f, spec.ndim, ax)
            return sfft.irfftn(spec, s=self.values.shape)
        out = self.values
        if sum(beta):
            facs = [axis_multiplier(grid.kv, b) for b in beta]
            res = np.empty_like(self.values)
            nx = grid.Nx
            per = self.values.size // nx
            for sl in slabs(nx, per):
                idx = (slice(None),) * d + (sl,)
                res[idx] = apply_multipliers(self.values[idx], grid.v_axes, facs)
            out = res
        if sum(alpha):
            out = derivative_array(out, grid, alpha, "position", self.max_order)
        return out
