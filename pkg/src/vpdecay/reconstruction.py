"""Free-space density of a profile: rho(t, x) = int g(x - t a(v), v) dv.

Three evaluation routes, each exact for the grid interpolant of ``g``:

``node``
    Velocity-node sum of the trigonometric x-interpolant.  Accurate while the
    streams from neighbouring velocity nodes overlap (small ``t``).
``sheared``
    Non-relativistic position form ``t^-d int g(y, (x - y)/t) dy`` with the
    trigonometric v-interpolant; the y-sum becomes a separable phase
    contraction, after which rho is a trigonometric series in ``x/t``.
``stream``
    Relativistic position form ``t^-d int g(y, a^{-1}((x-y)/t)) J dy`` with
    tensor Lagrange interpolation in v (J is the inverse Jacobian determinant).
"""
from __future__ import annotations

import itertools
import string

import numpy as np
import scipy.fft as sfft

from .grid import PhaseGrid, apply_multipliers, axis_multiplier, derivative_array, slabs
from .littlewood_paley import multi_indices
from .transport import TransportModel, inverse_velocity_map, velocity_map

_LETTERS = string.ascii_lowercase


def dirichlet_weights(s: np.ndarray, n: int, length: float, order: int = 0) -> np.ndarray:
    """Derivative of the periodic band-limited interpolation kernel at offsets ``s``.

    Returns an array ``s.shape + (n,)``... evaluated for the kernel centred at
    zero; callers pass ``s = z - y_m``.
    """
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    s = np.asarray(s, dtype=float)
    phase = np.exp(1j * s[..., None] * k)
    coef = (1j * k) ** order
    vals = phase * coef
    # symmetric Nyquist term: d^order/ds^order cos(kN s)
    kn = np.abs(k[n // 2])
    nyq = np.real((1j * kn) ** order * np.exp(1j * kn * s))
    out = (np.sum(vals, axis=-1) - vals[..., n // 2]).real + nyq
    return out / n


def _lagrange(xi: np.ndarray, p: int) -> np.ndarray:
    """Lagrange basis on nodes 0..p-1 evaluated at ``xi`` (shape (..., p))."""
    nodes = np.arange(p, dtype=float)
    out = np.ones(xi.shape + (p,))
    for j in range(p):
        for m in range(p):
            if m != j:
                out[..., j] *= (xi - nodes[m]) / (nodes[j] - nodes[m])
    return out


STREAM_MIN_CELLS = 6


class DensityReconstructor:
    """Evaluate rho(t, .) and its x-derivatives for a fixed profile ``g``.

    Parameters
    ----------
    g : phase-space array on ``grid``
    grid : PhaseGrid
    model : TransportModel
    t_switch : time at which the node route hands over to the position
        forms (default ``dx / dv``, and at least ``6 dx`` for the relativistic law)
    lagrange_order : points per axis of the velocity interpolation in the
        ``stream`` route
    """

    def __init__(self, g: np.ndarray, grid: PhaseGrid, model: TransportModel,
                 t_switch: float | None = None, lagrange_order: int = 4):
        self.g = g
        self.grid = grid
        self.model = model
        if t_switch is None:
            t_switch = grid.dx / grid.dv
            if model.relativistic:
                # the stream sum over sources |x - y| < t needs several cells across the cone
                t_switch = max(t_switch, STREAM_MIN_CELLS * grid.dx)
        self.t_switch = float(t_switch)
        self.lagrange_order = int(lagrange_order)
        self._G = None
        self._H_cache: dict = {}
        self._deriv_cache: dict = {}

    # ------------------------------------------------------------ routing
    def route(self, t: float) -> str:
        if abs(t) < self.t_switch:
            return "node"
        return "stream" if self.model.relativistic else "sheared"

    # ------------------------------------------------------------ node route
    def _node_values(self, t: float, points: np.ndarray, alphas) -> np.ndarray:
        grid, d = self.grid, self.grid.d
        vpts = grid.v_points().reshape(-1, d)
        shift = t * velocity_map(vpts, self.model)
        gflat = self.g.reshape(grid.Nv**d, *grid.spatial_shape)
        out = np.zeros((len(alphas), len(points)))
        xn = grid.x_nodes
        half = 0.5 * grid.Lx
        chunk = max(1, 2**22 // int(np.prod(grid.spatial_shape)))
        for p, x in enumerate(points):
            z = x[None, :] - shift  # (Nv^d, d)
            inside = np.all((z >= -half - 0.5 * grid.dx) & (z < half + 0.5 * grid.dx), axis=1)
            for start in range(0, len(z), chunk):
                sel = np.nonzero(inside[start:start + chunk])[0] + start
                if sel.size == 0:
                    continue
                zi = z[sel]
                gi = gflat[sel]
                for ia, alpha in enumerate(alphas):
                    acc = gi
                    # contract the position axes from the last one inwards
                    for a in reversed(range(d)):
                        w = dirichlet_weights(zi[:, a, None] - xn[None, :], grid.Nx, grid.Lx, alpha[a])
                        sub = _LETTERS[:acc.ndim]
                        acc = np.einsum(f"{sub},{sub[0]}{sub[-1]}->{sub[:-1]}", acc, w)
                    out[ia, p] += grid.cell_v * float(np.sum(acc))
        return out

    def node_lattice(self, t: float, alpha=None, upsample: int = 1):
        """rho (or a derivative) on the extended position lattice by shift-and-deposit.

        Returns ``(origin, spacing, values)`` with values on nodes
        ``origin + i * spacing`` along each axis.
        """
        grid, d = self.grid, self.grid.d
        alpha = (0,) * d if alpha is None else tuple(alpha)
        vpts = grid.v_points().reshape(-1, d)
        s = t * velocity_map(vpts, self.model) / grid.dx
        q = np.floor(s).astype(int)
        r = s - q
        qmin = q.min(axis=0)
        qmax = q.max(axis=0)
        ext = int(np.max(qmax - qmin)) + grid.Nx + 1
        lat = np.zeros((ext,) * d)
        # g_interp(x_n - s dx) = shifted g at node n - q, with shift -r dx
        offs = (-r * grid.dx).reshape(grid.velocity_shape + (d,))
        flat_q = q.reshape(grid.velocity_shape + (d,))
        k = grid.kx
        per = int(np.prod(self.g.shape[1:]))
        for sl in slabs(self.g.shape[0], per):
            off = offs[sl]
            facs = [axis_multiplier(k, alpha[a], off[..., a]) for a in range(d)]
            sh = apply_multipliers(self.g[sl], grid.x_axes, facs)
            sh = sh.reshape(-1, *grid.spatial_shape)
            qq = flat_q[sl].reshape(-1, d) - qmin
            for j in range(sh.shape[0]):
                idx = tuple(slice(qq[j, a], qq[j, a] + grid.Nx) for a in range(d))
                lat[idx] += sh[j]
        lat *= grid.cell_v
        origin = -0.5 * grid.Lx + qmin * grid.dx
        spacing = grid.dx
        if upsample > 1:
            lat, spacing = _fourier_upsample(lat, upsample), grid.dx / upsample
        return origin, spacing, lat

    # ------------------------------------------------------------ sheared route
    def _velocity_spectrum(self) -> np.ndarray:
        """rfft of g over the velocity axes, computed once per profile."""
        if self._G is None:
            grid = self.grid
            vax = grid.v_axes
            shape = list(grid.phase_shape)
            shape[grid.d - 1] = grid.Nv // 2 + 1
            G = np.empty(shape, dtype=complex)
            # slabs over the first position axis keep the temporaries small
            nx = grid.Nx
            step = max(1, nx * (2**24) // max(self.g.size, 1))
            for start in range(0, nx, step):
                idx = (slice(None),) * grid.d + (slice(start, start + step),)
                G[idx] = sfft.rfftn(self.g[idx], axes=vax)
            self._G = G
        return self._G

    def _eta(self):
        grid = self.grid
        full = grid.kv
        half = 2 * np.pi * np.fft.rfftfreq(grid.Nv, d=grid.dv)
        return full, half

    def sheared_spectrum(self, t: float) -> np.ndarray:
        """Coefficients Hs(eta) such that rho(x) = Re sum_eta w (i eta/t)^a e^{i eta x/t} Hs(eta)."""
        key = float(t)
        if key in self._H_cache:
            return self._H_cache[key]
        grid, d = self.grid, self.grid.d
        G = self._velocity_spectrum()
        full, half = self._eta()
        y = grid.x_nodes
        etas = [full] * (d - 1) + [half]
        H = G
        # contract the last position axis first; each eta_a pairs with y_a
        for a in reversed(range(d)):
            P = np.exp(-1j * np.outer(etas[a], y) / t)
            ndim = H.ndim
            sub_in = _LETTERS[:ndim]
            eta_ax, y_ax = sub_in[a], sub_in[ndim - 1]
            sub_out = sub_in[:-1]
            H = np.einsum(f"{sub_in},{eta_ax}{y_ax}->{sub_out}", H, P)
        v0 = grid.v_nodes[0]
        coef = (grid.dx / (abs(t) * grid.Nv)) ** d
        for a in range(d):
            shape = [1] * d
            shape[a] = etas[a].size
            H = H * np.exp(-1j * etas[a] * v0).reshape(shape)
        w = np.full(half.size, 2.0)
        w[0] = 1.0
        if grid.Nv % 2 == 0:
            w[-1] = 1.0
        shape = [1] * (d - 1) + [half.size]
        H = coef * H * w.reshape(shape)
        if len(self._H_cache) > 4:
            self._H_cache.clear()
        self._H_cache[key] = H
        return H

    def _sheared_values(self, t: float, points: np.ndarray, alphas) -> np.ndarray:
        grid, d = self.grid, self.grid.d
        H = self.sheared_spectrum(t)
        full, half = self._eta()
        etas = [full] * (d - 1) + [half]
        out = np.zeros((len(alphas), len(points)))
        mesh = np.meshgrid(*etas, indexing="ij")
        Hf = H.reshape(-1)
        eflat = [m.reshape(-1) for m in mesh]
        for start in range(0, len(points), 256):
            pts = points[start:start + 256]
            ph = np.exp(1j * sum(np.outer(pts[:, a], eflat[a]) for a in range(d)) / t)
            for ia, alpha in enumerate(alphas):
                mult = np.ones_like(Hf)
                for a in range(d):
                    if alpha[a]:
                        mult = mult * (1j * eflat[a] / t) ** alpha[a]
                out[ia, start:start + 256] = np.real(ph @ (mult * Hf))
        reach = abs(t) * self.grid.Vmax + 0.5 * self.grid.Lx
        far = np.any(np.abs(points) > reach, axis=1)
        out[:, far] = 0.0
        return out

    def sheared_lattice(self, t: float, axes_points, alpha=None) -> np.ndarray:
        """rho (or a derivative) on the tensor lattice ``axes_points[0] x ... ``."""
        grid, d = self.grid, self.grid.d
        alpha = (0,) * d if alpha is None else tuple(alpha)
        H = self.sheared_spectrum(t)
        full, half = self._eta()
        etas = [full] * (d - 1) + [half]
        Z = H
        for a in reversed(range(d)):
            E = np.exp(1j * np.outer(axes_points[a], etas[a]) / t)
            if alpha[a]:
                E = E * ((1j * etas[a] / t) ** alpha[a])[None, :]
            Z = np.moveaxis(np.tensordot(Z, E, axes=([a], [1])), -1, a)
        out = Z.real
        reach = abs(t) * grid.Vmax + 0.5 * grid.Lx
        for a in range(d):
            mask = np.abs(np.asarray(axes_points[a])) > reach
            if mask.any():
                idx = [slice(None)] * d
                idx[a] = mask
                out[tuple(idx)] = 0.0
        return out

    def sheared_candidates(self, t: float, alpha, offset: float = 0.0) -> tuple:
        """Values on the lattice ``x = t (v_j + offset)`` by one inverse FFT."""
        grid, d = self.grid, self.grid.d
        H = self.sheared_spectrum(t)
        full, half = self._eta()
        etas = [full] * (d - 1) + [half]
        Y = H.copy()
        x0 = grid.v_nodes[0] + offset
        for a in range(d):
            shape = [1] * d
            shape[a] = etas[a].size
            fac = np.exp(1j * etas[a] * x0)
            if alpha[a]:
                fac = fac * (1j * etas[a] / t) ** alpha[a]
            Y = Y * fac.reshape(shape)
        # Y already carries the Hermitian weights; undo them for irfftn
        w = np.full(half.size, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        Y = Y / w.reshape([1] * (d - 1) + [half.size])
        vals = sfft.irfftn(Y, s=(grid.Nv,) * d) * grid.Nv**d
        axis = t * (grid.v_nodes + offset)
        return axis, vals

    # ------------------------------------------------------------ stream route
    def _field(self, alpha) -> np.ndarray:
        alpha = tuple(alpha)
        if sum(alpha) == 0:
            return self.g
        if alpha not in self._deriv_cache:
            if len(self._deriv_cache) >= 3:
                self._deriv_cache.clear()
            self._deriv_cache[alpha] = derivative_array(self.g, self.grid, alpha, "position")
        return self._deriv_cache[alpha]

    def _stream_values(self, t: float, points: np.ndarray, alphas) -> np.ndarray:
        grid, d, p = self.grid, self.grid.d, self.lagrange_order
        Nv = grid.Nv
        y = grid.x_points().reshape(-1, d)
        ny = y.shape[0]
        out = np.zeros((len(alphas), len(points)))
        fields = [self._field(al).reshape(-1) for al in alphas]
        offsets = np.array(list(itertools.product(range(p), repeat=d)))  # (p^d, d)
        vstride = np.array([Nv ** (d - 1 - a) for a in range(d)]) * ny
        batch = max(1, 2**21 // (ny * offsets.shape[0]))
        for start in range(0, len(points), batch):
            pts = points[start:start + batch]
            w = ((pts[:, None, :] - y[None, :, :]) / t).reshape(-1, d)
            owner = np.repeat(np.arange(len(pts)), ny)
            yi = np.tile(np.arange(ny), len(pts))
            if self.model.relativistic:
                ok = np.sum(w * w, axis=1) < 1.0 - 1e-14
                w, owner, yi = w[ok], owner[ok], yi[ok]
            v = inverse_velocity_map(w, self.model)
            ok = np.all(np.abs(v) < grid.Vmax, axis=1)
            v, owner, yi = v[ok], owner[ok], yi[ok]
            if not len(v):
                continue
            jac = (1.0 + np.sum(v * v, axis=1)) ** ((d + 2) / 2.0) if self.model.relativistic else np.ones(len(v))
            u = (v - grid.v_nodes[0]) / grid.dv
            base = np.floor(u).astype(int) - (p // 2 - 1)
            lw = _lagrange(u - base, p)  # (n, d, p)
            weight = np.ones((len(v), offsets.shape[0]))
            index = np.zeros((len(v), offsets.shape[0]), dtype=np.int64)
            valid = np.ones((len(v), offsets.shape[0]), dtype=bool)
            for a in range(d):
                ia = base[:, a, None] + offsets[None, :, a]
                valid &= (ia >= 0) & (ia < Nv)
                weight *= lw[:, a, :][:, offsets[:, a]]
                index += np.clip(ia, 0, Nv - 1) * vstride[a]
            index += yi[:, None]
            weight = np.where(valid, weight, 0.0) * jac[:, None]
            for ia_, fl in enumerate(fields):
                contrib = np.sum(fl[index] * weight, axis=1)
                out[ia_, start:start + len(pts)] = np.bincount(owner, contrib, minlength=len(pts))
        return out * (grid.cell_x / abs(t) ** d)

    # ------------------------------------------------------------ public API
    def values(self, t: float, points, alphas=None) -> np.ndarray:
        """Derivatives ``d^alpha rho(t, x)`` at ``points`` (array (n, d)); shape (n_alpha, n)."""
        d = self.grid.d
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != d:
            raise ValueError("points must have d components")
        alphas = [(0,) * d] if alphas is None else [tuple(a) for a in alphas]
        route = self.route(t)
        if route == "node":
            return self._node_values(t, points, alphas)
        if route == "sheared":
            return self._sheared_values(t, points, alphas)
        return self._stream_values(t, points, alphas)

    def lattice(self, t: float, axis_points: np.ndarray) -> np.ndarray:
        """rho on the cubic lattice ``axis_points^d`` (used for the force)."""
        d = self.grid.d
        route = self.route(t)
        if route == "sheared":
            return self.sheared_lattice(t, [axis_points] * d)
        if route == "node":
            origin, h, lat = self.node_lattice(t)
            return _resample_lattice(lat, origin, h, axis_points)
        pts = np.stack(np.meshgrid(*([axis_points] * d), indexing="ij"), axis=-1).reshape(-1, d)
        return self._stream_values(t, pts, [(0,) * d])[0].reshape((len(axis_points),) * d)

    # ------------------------------------------------------------ sup search
    def sup(self, t: float, k: int, refine_iters: int = 8, n_refine: int = 3) -> tuple:
        """max over x of the largest |d^alpha rho| with |alpha| = k.

        Candidates are the points t a(v_j) and a coarse lattice over the
        reachable set; the best ones are refined by gradient ascent.  The node
        route already samples a 4x Fourier-refined lattice and skips the ascent.
        Returns ``(value, argmax)``.
        """
        grid, d = self.grid, self.grid.d
        alphas = list(multi_indices(d, k, exact=True))
        route = self.route(t)
        if route == "node":
            refine_iters = 0
        cand_pts, cand_vals = self._candidates(t, alphas, route)
        order = np.argsort(-cand_vals)
        best_val = float(cand_vals[order[0]]) if len(order) else 0.0
        best_x = cand_pts[order[0]] if len(order) else np.zeros(d)
        if best_val == 0.0:
            return 0.0, best_x
        spacing = self._candidate_spacing(t, route)
        chosen = []
        for i in order:
            x = cand_pts[i]
            if all(np.max(np.abs(x - c)) > 1.5 * spacing for c in chosen):
                chosen.append(x)
            if len(chosen) >= n_refine:
                break

        def objective(x):
            return float(np.max(np.abs(self.values(t, x[None, :], alphas)[:, 0])))

        for x0 in chosen:
            x = np.array(x0, dtype=float)
            fx = objective(x)
            step = spacing / 4.0
            for _ in range(refine_iters):
                h = 1e-3 * spacing
                probes = [x + h * e for e in np.eye(d)] + [x - h * e for e in np.eye(d)]
                vals = np.max(np.abs(self.values(t, np.array(probes), alphas)), axis=0)
                grad = (vals[:d] - vals[d:]) / (2 * h)
                gn = np.linalg.norm(grad)
                if gn == 0:
                    break
                trial = x + step * grad / gn
                ft = objective(trial)
                if ft > fx:
                    x, fx = trial, ft
                else:
                    step *= 0.5
            if fx > best_val:
                best_val, best_x = fx, x
        return best_val, best_x

    def _candidate_spacing(self, t: float, route: str) -> float:
        if route == "node":
            return self.grid.dx / 4.0
        if route == "sheared":
            return 0.5 * abs(t) * self.grid.dv
        return max(self.grid.dx, abs(t) * self.grid.dv)

    def _candidates(self, t: float, alphas, route: str):
        grid, d = self.grid, self.grid.d
        if route == "node":
            pts_all, vals_all = [], []
            origin, h, lat = self.node_lattice(t)
            up = 4
            comp = []
            for alpha in alphas:
                o, hh, la = self._node_lattice_derivative(lat, origin, h, alpha, up)
                comp.append(np.abs(la))
            vals = np.max(np.stack(comp), axis=0)
            ax = [o[a] + hh * np.arange(vals.shape[a]) for a in range(d)]
            pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, d)
            return pts, vals.reshape(-1)
        if route == "sheared":
            pts_all, vals_all = [], []
            for off in (0.0, 0.5 * grid.dv):
                comp = []
                for alpha in alphas:
                    axis, vals = self.sheared_candidates(t, alpha, off)
                    comp.append(np.abs(vals))
                vmax = np.max(np.stack(comp), axis=0)
                pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
                pts_all.append(pts)
                vals_all.append(vmax.reshape(-1))
            return np.concatenate(pts_all), np.concatenate(vals_all)
        # stream route: thinned {t a(v_j)} plus a coarse lattice over the reachable ball
        stride = max(1, grid.Nv // 8)
        vsub = grid.v_nodes[::stride]
        vpts = np.stack(np.meshgrid(*([vsub] * d), indexing="ij"), axis=-1).reshape(-1, d)
        streams = t * velocity_map(vpts, self.model)
        reach = abs(t) * float(np.max(np.abs(velocity_map(grid.v_points().reshape(-1, d), self.model)))) + 0.5 * grid.Lx
        lat1 = np.linspace(-reach, reach, 9)
        lattice = np.stack(np.meshgrid(*([lat1] * d), indexing="ij"), axis=-1).reshape(-1, d)
        pts = np.concatenate([streams, lattice])
        vals = np.max(np.abs(self.values(t, pts, alphas)), axis=0)
        return pts, vals

    def _node_lattice_derivative(self, lat, origin, h, alpha, up):
        d = lat.ndim
        n = lat.shape[0]
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        spec = sfft.fftn(lat)
        for a in range(d):
            if alpha[a]:
                shape = [1] * d
                shape[a] = n
                spec = spec * axis_multiplier(k, alpha[a]).reshape(shape)
        fine = _fourier_upsample_spec(spec, up)
        return origin, h / up, fine


def _fourier_upsample_spec(spec: np.ndarray, up: int) -> np.ndarray:
    d = spec.ndim
    n = spec.shape[0]
    m = n * up
    big = np.zeros((m,) * d, dtype=complex)
    kk = np.fft.fftfreq(n) * n
    idx_small = np.arange(n)
    idx_big = np.where(kk >= 0, kk, kk + m).astype(int)
    big[np.ix_(*([idx_big] * d))] = spec[np.ix_(*([idx_small] * d))]
    return sfft.ifftn(big).real * up**d


def _fourier_upsample(lat: np.ndarray, up: int) -> np.ndarray:
    return _fourier_upsample_spec(sfft.fftn(lat), up)


def _resample_lattice(lat: np.ndarray, origin, h: float, axis_points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of a lattice (zero-extended) onto a tensor lattice."""
    d = lat.ndim
    n = lat.shape[0]
    length = n * h
    out = lat.astype(complex)
    for a in range(d):
        s = np.asarray(axis_points) - origin[a]
        nodes = h * np.arange(n)
        W = dirichlet_weights(s[:, None] - nodes[None, :], n, length, 0)
        inside = (s >= -0.5 * h) & (s <= length - 0.5 * h)
        W[~inside] = 0.0
        out = np.moveaxis(np.tensordot(out, W, axes=([a], [1])), -1, a)
    return out.real


def reconstruct_density(g, t: float, model: TransportModel, targets) -> np.ndarray:
    """rho(t, x) = int g(x - t a(v), v) dv at the targets (PhaseField input)."""
    rec = DensityReconstructor(g.values, g.grid, model)
    return rec.values(t, targets)[0]


def sup_density_derivative(g, t: float, model: TransportModel, k: int, max_order: int = 2) -> float:
    """Estimate of sup_x |grad^k rho(t, x)| (largest component)."""
    if k > max_order:
        raise ValueError(f"derivative order {k} exceeds the configured maximum {max_order}")
    rec = DensityReconstructor(g.values, g.grid, model)
    return rec.sup(t, k)[0]
