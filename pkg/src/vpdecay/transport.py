"""Transport laws a(v) and the force sign mu."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAWS = ("nonrelativistic", "relativistic")


@dataclass(frozen=True)
class TransportModel:
    """Transport law and force sign.

    ``law`` is ``"nonrelativistic"`` (a(v) = v) or ``"relativistic"``
    (a(v) = v / sqrt(1 + |v|^2)); ``mu`` is +1 or -1.
    """

    law: str = "nonrelativistic"
    mu: int = 1

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown transport law {self.law!r}")
        if self.mu not in (1, -1):
            raise ValueError(f"mu must be +1 or -1, got {self.mu}")

    @property
    def relativistic(self) -> bool:
        return self.law == "relativistic"


def velocity_map(v, model: TransportModel) -> np.ndarray:
    """a(v) for velocities stored along the last axis."""
    v = np.asarray(v, dtype=float)
    if not model.relativistic:
        return v.copy()
    gamma = np.sqrt(1.0 + np.sum(v * v, axis=-1, keepdims=True))
    return v / gamma


def inverse_velocity_map(w, model: TransportModel) -> np.ndarray:
    """a^{-1}(w); for the relativistic law |w| must be < 1."""
    w = np.asarray(w, dtype=float)
    if not model.relativistic:
        return w.copy()
    s = 1.0 - np.sum(w * w, axis=-1, keepdims=True)
    return w / np.sqrt(s)


def velocity_jacobian(v, model: TransportModel) -> np.ndarray:
    """Da(v) with shape ``v.shape + (d,)``; entry ``[..., i, j] = d a_i / d v_j``."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    eye = np.eye(d)
    if not model.relativistic:
        return np.broadcast_to(eye, v.shape + (d,)).copy()
    s = 1.0 + np.sum(v * v, axis=-1)
    g = s ** -0.5
    outer = v[..., :, None] * v[..., None, :]
    return g[..., None, None] * (eye - outer / s[..., None, None])


def jacobian_determinant(v, model: TransportModel) -> np.ndarray:
    """det Da(v) = (1 + |v|^2)^{-(d+2)/2} for the relativistic law."""
    v = np.asarray(v, dtype=float)
    if not model.relativistic:
        return np.ones(v.shape[:-1])
    d = v.shape[-1]
    return (1.0 + np.sum(v * v, axis=-1)) ** (-(d + 2) / 2.0)


def max_speed(grid, model: TransportModel) -> float:
    """max |a(v)| over the velocity nodes of ``grid``."""
    vmax = np.sqrt(grid.d) * grid.Vmax
    return vmax / np.sqrt(1 + vmax**2) if model.relativistic else vmax
