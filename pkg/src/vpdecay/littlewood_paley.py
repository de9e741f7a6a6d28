"""Dyadic cutoffs, frequency projections and shell-localized symbol norms."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .grid import SpatialField

PLATEAU = 1.25
EDGE = 1.5


def psi_tilde(x) -> np.ndarray:
    """Even bump: 1 on |x| <= 5/4, 0 on |x| >= 3/2, quintic smoothstep between."""
    r = np.abs(np.asarray(x, dtype=float))
    s = np.clip((r - PLATEAU) / (EDGE - PLATEAU), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def psi_leq(k: int, x) -> np.ndarray:
    return psi_tilde(np.asarray(x, dtype=float) / 2.0**k)


def psi_k(k: int, x) -> np.ndarray:
    """psi_k(x) = psi~(x / 2^k) - psi~(x / 2^(k-1))."""
    x = np.asarray(x, dtype=float)
    return psi_tilde(x / 2.0**k) - psi_tilde(x / 2.0 ** (k - 1))


def psi_geq(k: int, x) -> np.ndarray:
    """1 - psi_{<= k-1}(x): the sum of psi_l over l >= k."""
    return 1.0 - psi_leq(k - 1, x)


def shell_bounds(k: int) -> tuple:
    """Closed radial support of psi_k."""
    return PLATEAU * 2.0 ** (k - 1), EDGE * 2.0**k


def _wavenumber_norm(grid) -> np.ndarray:
    k = grid.kx
    mesh = np.meshgrid(*([k] * grid.d), indexing="ij")
    return np.sqrt(sum(m * m for m in mesh))


def project_k(u: SpatialField, k: int) -> SpatialField:
    """P_k u: multiply the transform by psi_k(|xi|)."""
    grid = u.grid
    kmax = np.pi / grid.dx
    kmin = 2 * np.pi / grid.Lx
    lo, hi = shell_bounds(k)
    if hi > kmax or lo < kmin:
        warnings.warn(f"shell k={k} is only partially resolved by the grid", RuntimeWarning, stacklevel=2)
    spec = sfft.fftn(u.values)
    spec *= psi_k(k, _wavenumber_norm(grid))
    out = sfft.ifftn(spec)
    if not np.iscomplexobj(u.values):
        out = out.real
    return SpatialField(grid, out)


@dataclass(frozen=True)
class SymbolSpec:
    """Symbol data of the probes.

    ``m(xi, v)`` maps frequencies (..., d) and an optional velocity to values;
    ``c(v)`` maps velocities (..., d) to values; ``a`` is the homogeneity
    exponent (> -3).  ``v_dependent`` marks symbols that use their velocity
    argument (otherwise ``m`` is called with ``v=None``).
    """

    m: Callable = None
    c: Callable = None
    a: float = 0.0
    v_dependent: bool = False

    def __post_init__(self):
        if self.m is None:
            object.__setattr__(self, "m", lambda xi, v=None: np.ones(np.shape(xi)[:-1]))
        if self.c is None:
            object.__setattr__(self, "c", lambda v: np.ones(np.shape(v)[:-1]))
        if not self.a > -3:
            raise ValueError("homogeneity exponent must exceed -3")


def multi_indices(d: int, order: int, exact: bool = False):
    """All multi-indices of length d with |alpha| <= order (or == order)."""
    for alpha in itertools.product(range(order + 1), repeat=d):
        s = sum(alpha)
        if (s == order) if exact else (s <= order):
            yield alpha


def _fd_stencil(order: int) -> list:
    """(offset, weight) pairs of the iterated central difference of given order."""
    taps = {0: 1.0}
    for _ in range(order):
        new: dict = {}
        for o, w in taps.items():
            new[o + 1] = new.get(o + 1, 0.0) + 0.5 * w
            new[o - 1] = new.get(o - 1, 0.0) - 0.5 * w
        taps = new
    if order == 2:
        taps = {-1: 1.0, 0: -2.0, 1: 1.0}
    return sorted(taps.items())


def symbol_derivative(m: Callable, xi: np.ndarray, alpha, h: float, v=None) -> np.ndarray:
    """Central-difference approximation of the alpha-th xi-derivative of m."""
    d = xi.shape[-1]
    out = np.zeros(xi.shape[:-1], dtype=complex)
    stencils = [_fd_stencil(a) for a in alpha]
    for combo in itertools.product(*stencils):
        shift = np.array([o for o, _ in combo], dtype=float) * h
        w = np.prod([wt for _, wt in combo]) / h ** sum(alpha)
        out += w * np.asarray(m(xi + shift.reshape((1,) * (xi.ndim - 1) + (d,)), v))
    return out


def symbol_norm(spec, k: int, alpha_max: int = 2, d: int = 3, points: int = 64, v=None) -> float:
    """Truncated S^infty_k norm of a symbol.

    sum over |alpha| <= alpha_max of 2^{|alpha| k} ||F^{-1}[(d^alpha m) psi_k]||_{L1},
    with derivatives by central differences at step 2^k/64 and the inverse
    transform on a shell-adapted grid of extent 2^{k+2} with ``points^d`` nodes.
    ``spec`` is a SymbolSpec or a bare callable ``m(xi, v)``.
    """
    m = spec.m if isinstance(spec, SymbolSpec) else spec
    if alpha_max > 10:
        raise ValueError("alpha_max is limited to 10")
    scale = 2.0**k
    dxi = 4.0 * scale / points
    axis = dxi * (np.arange(points) - points // 2)
    xi = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    cut = psi_k(k, np.sqrt(np.sum(xi * xi, axis=-1)))
    dx = 2 * np.pi / (points * dxi)
    total = 0.0
    h = scale / 64.0
    for alpha in multi_indices(d, alpha_max):
        vals = symbol_derivative(m, xi, alpha, h, v) * cut
        if not np.isfinite(vals).all():
            raise ValueError("symbol is not finite on the shell")
        # inverse transform with the (2 pi)^-d convention; shifts only change phases
        kern = sfft.ifftn(sfft.ifftshift(vals)) * (points * dxi / (2 * np.pi)) ** d
        total += scale ** sum(alpha) * float(np.sum(np.abs(kern))) * dx**d
    return total
