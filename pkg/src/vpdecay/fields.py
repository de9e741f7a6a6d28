"""Potential and force from a density: periodic spectral inversion and free-space quadrature.

Sign convention: ``Laplacian(phi) = rho``.  In free space ``phi = Phi * rho`` with
the fundamental solution ``Phi`` of the Laplacian (``-1/(4 pi r)`` in 3D).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import PhaseGrid, SpatialField, axis_multiplier


@dataclass(frozen=True)
class FieldSolveResult:
    """Potential, its gradient (one SpatialField per axis) and the regime used."""

    phi: SpatialField
    grad_phi: tuple
    regime: str


def solve_poisson_torus(rho: SpatialField) -> FieldSolveResult:
    """Spectral solve of ``Laplacian(phi) = rho - mean(rho)`` on the periodic box."""
    grid = rho.grid
    d = grid.d
    vals = np.asarray(rho.values, dtype=float)
    axes = tuple(range(d))
    spec = sfft.rfftn(vals, axes=axes)
    k2 = np.zeros(spec.shape)
    ks = []
    for a in range(d):
        k = grid.kx if a < d - 1 else grid.kx[: grid.Nx // 2 + 1]
        shape = [1] * d
        shape[a] = k.size
        ks.append(k)
        k2 = k2 + (k.reshape(shape)) ** 2
    k2.flat[0] = 1.0
    phi_hat = -spec / k2
    phi_hat.flat[0] = 0.0
    phi = sfft.irfftn(phi_hat, s=vals.shape, axes=axes)
    grads = []
    for a in range(d):
        mult = axis_multiplier(grid.kx, 1)
        if a == d - 1:
            mult = mult[: grid.Nx // 2 + 1]
        shape = [1] * d
        shape[a] = mult.size
        grads.append(SpatialField(grid, sfft.irfftn(phi_hat * mult.reshape(shape), s=vals.shape, axes=axes)))
    return FieldSolveResult(SpatialField(grid, phi), tuple(grads), "torus")


# ---------------------------------------------------------------- free space

def kernel_gradient(r: np.ndarray) -> np.ndarray:
    """Gradient of the fundamental solution at displacements ``r`` (last axis = d)."""
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    dist = np.sqrt(np.sum(r * r, axis=-1, keepdims=True))
    if d == 3:
        return r / (4 * np.pi * dist**3)
    if d == 2:
        return r / (2 * np.pi * dist**2)
    return 0.5 * np.sign(r)


def kernel_potential(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    dist = np.sqrt(np.sum(r * r, axis=-1))
    if d == 3:
        return -1.0 / (4 * np.pi * dist)
    if d == 2:
        return np.log(dist) / (2 * np.pi)
    return 0.5 * dist


@dataclass(frozen=True)
class MidpointRule:
    """Midpoint rule on ``cells`` equal cells per axis covering ``[-half_width, half_width]^d``.

    ``half_width`` defaults to the support radius of the density.
    """

    cells: int = 32
    half_width: float | None = None


def field_free_space(rho_eval: Callable[[np.ndarray], np.ndarray], support_radius: float,
                     quadrature: MidpointRule, targets, return_potential: bool = False,
                     block: int = 256):
    """Free-space force ``grad phi(y)`` at each target by the midpoint rule.

    Parameters
    ----------
    rho_eval : callable mapping points of shape (n, d) to densities (n,)
    support_radius : radius outside which rho is negligible
    quadrature : MidpointRule
    targets : array (m, d); a target on a quadrature node is rejected
    return_potential : also return phi at the targets
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    d = targets.shape[1]
    if d not in (1, 2, 3):
        raise ValueError("targets must have 1, 2 or 3 components")
    half = support_radius if quadrature.half_width is None else float(quadrature.half_width)
    if support_radius > half:
        raise ValueError("support radius exceeds the sampled region")
    n = int(quadrature.cells)
    h = 2.0 * half / n
    c1 = -half + h * (np.arange(n) + 0.5)
    nodes = np.stack(np.meshgrid(*([c1] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = np.asarray(rho_eval(nodes), dtype=float).reshape(-1) * h**d
    keep = weights != 0.0
    nodes, weights = nodes[keep], weights[keep]
    # a target on (or numerically at) a node would hit the kernel singularity
    rel = (targets + half) / h - 0.5
    on_axis = np.abs(rel - np.round(rel)) < 1e-9
    inside = np.all((np.round(rel) >= 0) & (np.round(rel) <= n - 1), axis=1)
    if np.any(np.all(on_axis, axis=1) & inside):
        raise ValueError("target coincides with a quadrature node")
    force = np.zeros_like(targets)
    pot = np.zeros(len(targets))
    for start in range(0, len(targets), block):
        y = targets[start:start + block]
        r = y[:, None, :] - nodes[None, :, :]
        force[start:start + block] = np.einsum("mnd,n->md", kernel_gradient(r), weights)
        if return_potential:
            pot[start:start + block] = kernel_potential(r) @ weights
    return (force, pot) if return_potential else force


@lru_cache(maxsize=8)
def _unit_kernel_fft(n: int, d: int) -> np.ndarray:
    """FFT of the half-cell staggered kernel gradient on a unit lattice padded to 2n."""
    j = np.arange(2 * n)
    j = np.where(j < n, j, j - 2 * n) + 0.5
    r = np.stack(np.meshgrid(*([j] * d), indexing="ij"), axis=-1)
    kern = kernel_gradient(r)
    return np.stack([sfft.rfftn(kern[..., a]) for a in range(d)])


def lattice_force(rho: np.ndarray, h: float) -> np.ndarray:
    """Midpoint-rule free-space force on a cubic lattice, evaluated at staggered targets.

    ``rho`` holds cell-centre values on nodes ``o + i*h``; the force is returned
    at ``o + (i + 1/2)*h`` in every axis (shape ``(d,) + rho.shape``).  The
    discrete convolution is computed with zero padding, so the result equals
    the direct midpoint sum.
    """
    d = rho.ndim
    n = rho.shape[0]
    if any(s != n for s in rho.shape):
        raise ValueError("lattice must be cubic")
    kf = _unit_kernel_fft(n, d)
    rf = sfft.rfftn(rho, s=(2 * n,) * d)
    scale = h**d * h ** (1 - d)
    out = np.empty((d,) + rho.shape)
    sl = tuple(slice(0, n) for _ in range(d))
    for a in range(d):
        out[a] = scale * sfft.irfftn(rf * kf[a], s=(2 * n,) * d)[sl]
    return out


def torus_grid_field(rho_values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Convenience: torus force components stacked as an array ``(d,) + spatial_shape``."""
    res = solve_poisson_torus(SpatialField(grid, rho_values))
    return np.stack([g.values for g in res.grad_phi])
