"""Run orchestration: initial data, time loop, sampled diagnostics and output files."""
from __future__ import annotations

import csv
import json
import math
import os
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import __version__
from .config import RunConfig
from .diagnostics import energy_high, energy_low, fit_power_law, scattering_gap
from .grid import (PhaseField, PhaseGrid, density, derivative_array, l2_norm, read_snapshot,
                   write_snapshot, zero_mode)
from .littlewood_paley import multi_indices
from .profile import NonFiniteState, ProfileState, SupportViolation, from_profile, step_profile, to_profile
from .reconstruction import DensityReconstructor
from .torus import SimState, data_radius, default_dt, step_strang, t_wrap

PROFILE_DT = 0.25
LATE_FRACTION = 0.625  # g_alpha increments are measured after this fraction of T


class RunAborted(RuntimeError):
    """The run stopped early; ``manifest`` names the state file written."""

    def __init__(self, message: str, manifest: str):
        super().__init__(message)
        self.manifest = manifest


def series_columns(K: int) -> list:
    sups = ["sup_rho"] + [f"sup_grad{k}_rho" for k in range(1, K + 1)]
    return ["t", "mass", "l2", "E_high1", "E_high2", "E_low", "g_alpha_norm"] + sups + ["wrapped_flag"]


def fmt(x) -> str:
    """17 significant digits, scientific: lossless for doubles."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.16e}"


# ---------------------------------------------------------------- initial data

def initial_data(cfg: RunConfig, grid: PhaseGrid) -> PhaseField:
    """epsilon0 times the configured family on ``grid``."""
    spec = cfg.initial
    if spec.family == "file":
        f = read_snapshot(spec.path)
        if f.grid != grid:
            raise ValueError(f"snapshot grid {f.grid} does not match the configured grid {grid}")
        return PhaseField(grid, cfg.epsilon0 * f.values)
    xs = grid.x_mesh()
    vv = sum(c * c for c in grid.v_mesh())
    vpart = np.exp(-vv / (2 * spec.sigma_v**2))
    if spec.family == "gaussian":
        xpart = np.exp(-sum(c * c for c in xs) / (2 * spec.sigma_x**2))
    else:
        s = 0.5 * spec.separation
        rest = sum(c * c for c in xs[1:]) if grid.d > 1 else 0.0
        xpart = sum(np.exp(-((xs[0] - sgn * s) ** 2 + rest) / (2 * spec.sigma_x**2)) for sgn in (1, -1))
    xpart = np.broadcast_to(xpart, grid.spatial_shape)
    vpart = np.broadcast_to(vpart, grid.velocity_shape)
    vals = (cfg.epsilon0 * spec.A) * np.multiply.outer(vpart, xpart)
    return PhaseField(grid, vals)


# ---------------------------------------------------------------- sampling

@dataclass
class Sampler:
    """Collects rows of the series plus the zero modes needed for the scattering gap."""

    cfg: RunConfig
    rows: list = field(default_factory=list)
    zero_modes: dict = field(default_factory=dict)

    def mode_times(self) -> tuple:
        return (0.25 * self.cfg.T, 0.5 * self.cfg.T, self.cfg.T)

    def keep_mode(self, t: float, g: PhaseField) -> None:
        for tm in self.mode_times():
            if abs(t - tm) < 1e-9 * max(1.0, self.cfg.T):
                self.zero_modes[tm] = zero_mode(g.values, g.grid)


def _profile_row(cfg: RunConfig, s: ProfileState) -> list:
    g, grid = s.g, s.g.grid
    w = cfg.weights
    mass = grid.cell_x * grid.cell_v * float(np.sum(g.values))
    e1, e2 = energy_high(g, w)
    elow = energy_low(g, s.acc, w)
    ga = s.acc.norm(w)
    rec = DensityReconstructor(g.values, grid, s.model)
    sups = [rec.sup(s.t, k)[0] if np.any(g.values) else 0.0 for k in range(cfg.K + 1)]
    return [s.t, mass, l2_norm(g), e1, e2, elow, ga] + sups + [0]


def _torus_sups(f: PhaseField, K: int) -> list:
    rho = density(f)
    out = []
    for k in range(K + 1):
        best = 0.0
        for alpha in multi_indices(f.grid.d, k, exact=True):
            vals = derivative_array(rho.values, f.grid, alpha) if k else rho.values
            best = max(best, float(np.max(np.abs(vals))))
        out.append(best)
    return out


def _torus_row(cfg: RunConfig, s: SimState, twrap: float) -> list:
    f, grid = s.f, s.f.grid
    w = cfg.weights
    g = to_profile(f, s.t, s.model)
    mass = grid.cell_x * grid.cell_v * float(np.sum(f.values))
    e1, e2 = energy_high(g, w)
    elow = energy_low(g, None, w)
    return [s.t, mass, l2_norm(f), e1, e2, elow, math.nan] + _torus_sups(f, cfg.K) + [int(s.t > twrap)]


# ---------------------------------------------------------------- summary

def _drift(col) -> float:
    col = np.asarray(col, dtype=float)
    ref = col[0]
    if ref == 0:
        return 0.0 if np.all(col == 0) else math.inf
    return float(100.0 * np.max(np.abs(col - ref)) / abs(ref))


def _fit(t, y, window):
    try:
        slope, intercept, resid = fit_power_law((np.asarray(t), np.asarray(y)), window)
    except ValueError as exc:
        return {"slope": None, "intercept": None, "residual": None, "error": str(exc)}
    return {"slope": slope, "intercept": intercept, "residual": resid}


def summarize(cfg: RunConfig, rows: list, zero_modes: dict, grid: PhaseGrid) -> dict:
    cols = series_columns(cfg.K)
    arr = np.asarray(rows, dtype=float)
    get = {c: arr[:, i] for i, c in enumerate(cols)}
    t = get["t"]
    window = cfg.window()
    slopes = {}
    for k in range(cfg.K + 1):
        key = cols[7 + k]
        slopes[key] = _fit(t, get[key], window)
    ehigh = get["E_high1"] + get["E_high2"]
    out = {
        "version": __version__,
        "config": cfg.manifest(),
        "fit_window": list(window),
        "slopes": slopes,
        "E_high_growth": _fit(1.0 + t, ehigh, (1.0 + window[0], 1.0 + window[1])),
        "drift_percent": {"mass": _drift(get["mass"]), "l2": _drift(get["l2"]), "E_low": _drift(get["E_low"])},
        "samples": int(len(t)),
        "final_time": float(t[-1]),
    }
    ga = get["g_alpha_norm"]
    if np.isfinite(ga).all() and ga[-1] > 0:
        early = ga[t <= LATE_FRACTION * cfg.T]
        out["g_alpha_late_fraction"] = float(abs(ga[-1] - early[-1]) / ga[-1])
    tq, th, tT = 0.25 * cfg.T, 0.5 * cfg.T, cfg.T
    if all(x in zero_modes for x in (tq, th, tT)):
        w = cfg.weights
        g1 = scattering_gap(zero_modes[tq], zero_modes[th], w, grid)
        g2 = scattering_gap(zero_modes[th], zero_modes[tT], w, grid)
        out["scattering"] = {"gap_early": g1, "gap_late": g2, "ratio": (g2 / g1) if g1 > 0 else None}
    return out


def write_series(path, rows: list, K: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(series_columns(K))
        for r in rows:
            w.writerow([fmt(v) if i < len(r) - 1 else str(int(v)) for i, v in enumerate(r)])


def _abort(cfg: RunConfig, out: str, reason: str, t: float, f: PhaseField | None, rows: list) -> RunAborted:
    manifest = os.path.join(out, "state.json")
    snap = None
    if f is not None:
        snap = os.path.join(out, "state.vpf")
        write_snapshot(snap, f)
    write_series(os.path.join(out, "series.csv"), rows, cfg.K)
    with open(manifest, "w") as fh:
        json.dump({"reason": reason, "t": t, "snapshot": snap, "config": cfg.manifest(), "version": __version__},
                  fh, indent=2)
    return RunAborted(reason, manifest)


# ---------------------------------------------------------------- main loop

@dataclass
class RunResult:
    rows: list
    summary: dict
    final: PhaseField
    out_dir: str


def _steps(cfg: RunConfig, dt: float) -> int:
    n = int(round(cfg.T / dt))
    if n < 1 or abs(n * dt - cfg.T) > 1e-9 * cfg.T:
        raise ValueError(f"T = {cfg.T} is not a whole number of steps dt = {dt}")
    return n


def run_simulation(cfg: RunConfig, threads: int | None = None, out_dir: str | None = None,
                   write: bool = True) -> RunResult:
    """Run ``cfg``; writes series.csv and summary.json into ``out_dir`` (default cfg.output)."""
    out = cfg.output if out_dir is None else out_dir
    if write:
        os.makedirs(out, exist_ok=True)
    grid = cfg.grid()
    model = cfg.model
    f0 = initial_data(cfg, grid)
    sampler = Sampler(cfg)
    ctx = sfft.set_workers(threads) if threads else nullcontext()
    with ctx:
        if cfg.backend == "profile":
            dt = PROFILE_DT if cfg.dt is None else cfg.dt
            n = _steps(cfg, dt)
            s = ProfileState(0.0, f0, model, cfg.weights, field_zeroed=cfg.field_zeroed,
                             support_tol=cfg.support_tol)
            s.endpoint()
            sampler.rows.append(_profile_row(cfg, s))
            sampler.keep_mode(0.0, s.g)
            for i in range(1, n + 1):
                try:
                    s = step_profile(s, dt)
                except (NonFiniteState, SupportViolation) as exc:
                    if not write:
                        raise
                    raise _abort(cfg, out, str(exc), s.t, from_profile(s.g, s.t, model), sampler.rows) from exc
                if i % cfg.sample_cadence == 0 or i == n:
                    sampler.rows.append(_profile_row(cfg, s))
                    sampler.keep_mode(s.t, s.g)
            final = s.g
        else:
            dt = default_dt(grid, model) if cfg.dt is None else cfg.dt
            n = _steps(cfg, dt)
            twrap = t_wrap(grid, model, data_radius(f0.values, grid))
            s = SimState(0.0, f0, model, field_zeroed=cfg.field_zeroed)
            sampler.rows.append(_torus_row(cfg, s, twrap))
            sampler.keep_mode(0.0, to_profile(s.f, 0.0, model))
            for i in range(1, n + 1):
                s = step_strang(s, dt)
                s.t = i * dt
                if not np.isfinite(s.f.values).all():
                    if not write:
                        raise NonFiniteState(f"non-finite values at t={s.t}")
                    raise _abort(cfg, out, f"non-finite values at t={s.t}", s.t, None, sampler.rows)
                if i % cfg.sample_cadence == 0 or i == n:
                    sampler.rows.append(_torus_row(cfg, s, twrap))
                    sampler.keep_mode(s.t, to_profile(s.f, s.t, model))
            final = s.f
    summary = summarize(cfg, sampler.rows, sampler.zero_modes, grid)
    if write:
        write_series(os.path.join(out, "series.csv"), sampler.rows, cfg.K)
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return RunResult(sampler.rows, summary, final, out)


def read_series(path) -> dict:
    """series.csv -> {column: float array}."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    arr = np.asarray([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(head))
    return {c: arr[:, i] for i, c in enumerate(head)}
