"""Sampled phase-space functions in kernel, tilde and phase pictures.

A function is canonically represented by its integral kernel on G x G.
The tilde picture lives on G x O (momentum Fourier transform), the phase
picture on G x g*.  Transforms between pictures follow the hbar-scaled
Fourier convention; off-node evaluation is multilinear in chart
coordinates with zero fill outside the sampled region.

Test functions built here (bumps) carry an analytic closure alongside
their samples so oracle computations can bypass interpolation error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GridMismatch, SupportOverflow
from .grids import AlgebraGrid, CubeInterpolator, GroupGrid, MomentumGrid, UniformAxes

_CHUNK = 200_000


@dataclass
class KernelSamples:
    """Integral kernel sf(a_i, b_j) on a group grid; the lossless picture."""

    grid: GroupGrid
    values: np.ndarray          # (N, N) complex
    hbar: float
    analytic: Optional[Callable] = None   # fn(a_mats, b_mats) -> values

    def conj_transpose(self):
        fn = None
        if self.analytic is not None:
            orig = self.analytic
            fn = lambda a, b: np.conj(orig(b, a))
        return KernelSamples(self.grid, self.values.conj().T.copy(),
                             self.hbar, analytic=fn)

    def l2_norm(self):
        w = self.grid.haar_weights
        return float(np.sqrt(np.einsum('i,ij,j->', w, np.abs(self.values) ** 2, w).real))


@dataclass
class TildeSamples:
    """Momentum Fourier picture f~(q_i, X_k) on G x O."""

    grid_q: GroupGrid
    grid_X: AlgebraGrid
    values: np.ndarray          # (Nq, NX) complex
    hbar: float

    def l2_norm(self):
        w = self.grid_q.haar_weights
        return float(np.sqrt((w @ np.abs(self.values) ** 2).sum()
                             * self.grid_X.cell_volume))


@dataclass
class PhaseSamples:
    """Phase-space picture f(q_i, p_l) on G x g*."""

    grid_q: GroupGrid
    grid_p: MomentumGrid
    values: np.ndarray          # (Nq, Np) complex
    hbar: float


# ----------------------------------------------------------------------
# Tilde evaluation protocol
# ----------------------------------------------------------------------

class GriddedTilde:
    """Evaluate TildeSamples anywhere via chart-multilinear interpolation.

    ``eval`` takes group elements plus either free algebra coordinates
    (joint 2n-dimensional interpolation) or flat X-node indices (pure
    q-interpolation against per-node columns, the hot path in quadrature).
    """

    def __init__(self, t: TildeSamples):
        self.t = t
        self.model = t.grid_q.model
        qa = t.grid_q.chart.axes
        counts = tuple(c + 2 for c in qa.counts)
        cols = np.zeros((int(np.prod(counts)), t.grid_X.size), dtype=complex)
        multi = np.argwhere(t.grid_q.chart.cube_to_flat >= 0)
        flat_pad = np.ravel_multi_index(tuple((multi + 1).T), counts)
        order = t.grid_q.chart.cube_to_flat[tuple(multi.T)]
        cols[flat_pad] = t.values[order]
        self._q_counts = counts
        self._q_axes = qa
        self._cols = cols
        self._joint = None

    def _joint_interp(self):
        if self._joint is None:
            qa, xa = self._q_axes, self.t.grid_X.axes
            axes = UniformAxes(
                origin=np.concatenate([qa.origin, xa.origin]),
                spacing=np.concatenate([qa.spacing, xa.spacing]),
                counts=tuple(qa.counts) + tuple(xa.counts))
            nq_cube = int(np.prod(qa.counts))
            nx_cube = int(np.prod(xa.counts))
            joint = np.zeros((nq_cube, nx_cube), dtype=complex)
            qflat = self.t.grid_q.chart.cube_to_flat.ravel()
            xflat = self.t.grid_X.cube_to_flat.ravel()
            qsel = np.where(qflat >= 0)[0]
            xsel = np.where(xflat >= 0)[0]
            joint[np.ix_(qsel, xsel)] = self.t.values[np.ix_(qflat[qsel],
                                                             xflat[xsel])]
            self._joint = CubeInterpolator(axes, joint.reshape(axes.counts))
        return self._joint

    def eval(self, q_mats, x_coords, x_flat=None):
        if x_flat is not None:
            return self._eval_at_nodes(q_mats, x_flat)
        coords, ok = self.model.log_chart(np.asarray(q_mats))
        pts = np.concatenate([coords, np.atleast_2d(x_coords)], axis=1)
        out = np.zeros(pts.shape[0], dtype=complex)
        if np.any(ok):
            out[ok] = self._joint_interp()(pts[ok])
        return out

    def _eval_at_nodes(self, q_mats, x_flat):
        coords, ok = self.model.log_chart(np.asarray(q_mats))
        qa = self._q_axes
        t = (coords - qa.origin) / qa.spacing
        base = np.floor(t).astype(np.int64)
        frac = t - base
        counts = np.asarray(qa.counts)
        valid = ok & np.all((base >= -1) & (base <= counts - 1), axis=1)
        base_p = np.clip(base + 1, 0, counts)
        out = np.zeros(coords.shape[0], dtype=complex)
        if not np.any(valid):
            return out
        bp = base_p[valid]
        fr = frac[valid]
        xs = np.asarray(x_flat)[valid]
        n = qa.ndim
        acc = np.zeros(bp.shape[0], dtype=complex)
        for corner in range(1 << n):
            w = np.ones(bp.shape[0])
            idx = bp.copy()
            for d in range(n):
                if (corner >> d) & 1:
                    idx[:, d] += 1
                    w = w * fr[:, d]
                else:
                    w = w * (1.0 - fr[:, d])
            flat = np.ravel_multi_index(tuple(idx.T), self._q_counts)
            acc += w * self._cols[flat, xs]
        out[valid] = acc
        return out


class AnalyticTilde:
    """Tilde function in closed form: fn(q_mats, x_coords) -> values."""

    def __init__(self, model, fn, x_nodes=None):
        self.model = model
        self.fn = fn
        self._x_nodes = x_nodes

    def eval(self, q_mats, x_coords, x_flat=None):
        if x_coords is None and x_flat is not None:
            x_coords = self._x_nodes[np.asarray(x_flat)]
        return self.fn(np.asarray(q_mats), np.atleast_2d(x_coords))


def as_tilde_function(obj):
    if isinstance(obj, TildeSamples):
        return GriddedTilde(obj)
    if hasattr(obj, "eval"):
        return obj
    raise TypeError(f"cannot interpret {type(obj)!r} as a tilde function")


def analytic_kernel_tilde(k: KernelSamples) -> AnalyticTilde:
    """Exact tilde function of a kernel carrying an analytic closure."""
    if k.analytic is None:
        raise ValueError("kernel has no analytic closure")
    model = k.grid.model

    def fn(q_mats, x):
        x = np.atleast_2d(x)
        a = np.einsum('kij,kjl->kil', np.asarray(q_mats),
                      model.exp_chart(-x / 2.0))
        b = np.einsum('kij,kjl->kil', np.asarray(q_mats),
                      model.exp_chart(x / 2.0))
        return k.analytic(a, b) * model.F_vals(x)

    return AnalyticTilde(model, fn)


# ----------------------------------------------------------------------
# Picture transforms
# ----------------------------------------------------------------------

def kernel_to_tilde(k: KernelSamples, grid_X: AlgebraGrid) -> TildeSamples:
    """f~(q, X) = sf(q exp(-X/2), q exp(X/2)) F(X)."""
    model = k.grid.model
    if grid_X.model is not model:
        raise GridMismatch("kernel and algebra grid live on different models")
    q_el = k.grid.elements
    nq, nx = k.grid.size, grid_X.size
    e_min = model.exp_chart(-grid_X.nodes / 2.0)
    e_pl = model.exp_chart(grid_X.nodes / 2.0)
    f_of_x = model.F_vals(grid_X.nodes)
    out = np.empty((nq, nx), dtype=complex)
    interp = None if k.analytic is not None else _KernelInterp(k)
    step = max(1, _CHUNK // max(nq, 1))
    m = model.matrix_size
    for start in range(0, nx, step):
        sl = slice(start, min(start + step, nx))
        a = np.einsum('qij,xjk->qxik', q_el, e_min[sl]).reshape(-1, m, m)
        b = np.einsum('qij,xjk->qxik', q_el, e_pl[sl]).reshape(-1, m, m)
        vals = k.analytic(a, b) if k.analytic is not None else interp(a, b)
        out[:, sl] = vals.reshape(nq, -1) * f_of_x[sl]
    return TildeSamples(grid_q=k.grid, grid_X=grid_X, values=out, hbar=k.hbar)


class _KernelInterp:
    """2n-dimensional multilinear interpolation of a sampled kernel."""

    def __init__(self, k: KernelSamples):
        self.model = k.grid.model
        qa = k.grid.chart.axes
        axes = UniformAxes(origin=np.concatenate([qa.origin, qa.origin]),
                           spacing=np.concatenate([qa.spacing, qa.spacing]),
                           counts=tuple(qa.counts) + tuple(qa.counts))
        nq_cube = int(np.prod(qa.counts))
        cube = np.zeros((nq_cube, nq_cube), dtype=complex)
        flat = k.grid.chart.cube_to_flat.ravel()
        sel = np.where(flat >= 0)[0]
        cube[np.ix_(sel, sel)] = k.values[np.ix_(flat[sel], flat[sel])]
        self._interp = CubeInterpolator(axes, cube.reshape(axes.counts))

    def __call__(self, a_mats, b_mats):
        ca, oa = self.model.log_chart(a_mats)
        cb, ob = self.model.log_chart(b_mats)
        ok = oa & ob
        out = np.zeros(ca.shape[0], dtype=complex)
        if np.any(ok):
            out[ok] = self._interp(np.concatenate([ca[ok], cb[ok]], axis=1))
        return out


def tilde_to_kernel(t: TildeSamples) -> KernelSamples:
    """sf(a, b) = f~(a exp(V_a(b)/2), V_a(b)) / F(V_a(b)), zero off-chart."""
    model = t.grid_q.model
    grid = t.grid_q
    n = grid.size
    tf = GriddedTilde(t)
    values = np.zeros((n, n), dtype=complex)
    m = model.matrix_size
    step = max(1, _CHUNK // max(n, 1))
    for start in range(0, n, step):
        sl = slice(start, min(start + step, n))
        rows = grid.elements_inv[sl].shape[0]
        ab = np.einsum('aij,bjk->abik', grid.elements_inv[sl],
                       grid.elements).reshape(-1, m, m)
        v, ok = model.log_chart(ab)
        ok &= model.inside(v)
        vals = np.zeros(rows * n, dtype=complex)
        if np.any(ok):
            a_rep = np.repeat(grid.elements[sl], n, axis=0)[ok]
            arg_q = np.einsum('kij,kjl->kil', a_rep, model.exp_chart(v[ok] / 2.0))
            vals[ok] = tf.eval(arg_q, v[ok]) / model.F_vals(v[ok])
        values[sl] = vals.reshape(rows, n)
    return KernelSamples(grid=grid, values=values, hbar=t.hbar)


def tilde_to_phase(t: TildeSamples, grid_p: MomentumGrid) -> PhaseSamples:
    """Inverse momentum transform: f(q,p) = sum_X f~(q,X) e^{-i<p,X>/hbar} dX."""
    phases = np.exp((-1j / t.hbar) * (t.grid_X.nodes @ grid_p.nodes.T))
    values = (t.values @ phases) * t.grid_X.cell_volume
    return PhaseSamples(grid_q=t.grid_q, grid_p=grid_p, values=values, hbar=t.hbar)


def phase_to_tilde(f: PhaseSamples, grid_X: AlgebraGrid) -> TildeSamples:
    """Forward transform with prefactor 1/|2 pi hbar|^n."""
    n = f.grid_q.model.dim_algebra
    phases = np.exp((1j / f.hbar) * (f.grid_p.nodes @ grid_X.nodes.T))
    values = (f.values @ phases) * (f.grid_p.cell_volume
                                    / abs(2.0 * np.pi * f.hbar) ** n)
    return TildeSamples(grid_q=f.grid_q, grid_X=grid_X, values=values, hbar=f.hbar)


def phase_eval_at(t_fn, hbar, grid_X, q_mat, p_coords):
    """Evaluate the phase picture at one q and a batch of p from tilde data."""
    p_coords = np.atleast_2d(p_coords)
    nx = grid_X.size
    qs = np.broadcast_to(q_mat, (nx,) + q_mat.shape)
    vals = t_fn.eval(qs, grid_X.nodes, x_flat=np.arange(nx))
    phases = np.exp((-1j / hbar) * (grid_X.nodes @ p_coords.T))
    return (vals @ phases) * grid_X.cell_volume


# ----------------------------------------------------------------------
# Integrals
# ----------------------------------------------------------------------

def _x_stencil(grid_X: AlgebraGrid, point):
    probe = CubeInterpolator(grid_X.axes, np.zeros(grid_X.axes.counts, complex))
    rows, cols, w = probe.stencil(np.atleast_2d(point), grid_X.cube_to_flat)
    return cols, w


def tilde_at_zero(t: TildeSamples) -> np.ndarray:
    """Per-q values f~(q, 0), exact when 0 is a node."""
    cols, w = _x_stencil(t.grid_X, np.zeros(t.grid_X.axes.ndim))
    return t.values[:, cols] @ w


def liouville_integral(t: TildeSamples) -> complex:
    """Improper phase-space integral, evaluated as int_G f~(q, 0) dm."""
    return complex(t.grid_q.haar_weights @ tilde_at_zero(t))


def momentum_box_integral(f: PhaseSamples) -> np.ndarray:
    """Per-q profile of the box-truncated momentum integral of f dp."""
    return f.values.sum(axis=1) * f.grid_p.cell_volume


def trace_functional(k: KernelSamples) -> complex:
    """tr(f) = sum_i w_i sf(q_i, q_i)."""
    return complex(k.grid.haar_weights @ np.diag(k.values))


def inner_product(k1: KernelSamples, k2: KernelSamples) -> complex:
    """(f, g) = sum_ij w_i w_j conj(sf(a_i,b_j)) sg(a_i,b_j)."""
    if k1.grid is not k2.grid:
        raise GridMismatch("inner product requires a shared grid")
    if k1.hbar != k2.hbar:
        raise GridMismatch("inner product requires equal hbar")
    w = k1.grid.haar_weights
    return complex(np.einsum('i,ij,j->', w, k1.values.conj() * k2.values, w))


# ----------------------------------------------------------------------
# Bump test functions
# ----------------------------------------------------------------------

def _bump_profile(r2):
    """exp(-1/(1-r^2)) inside the unit ball, exactly zero outside."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _chart_offset(model, center_inv, mats):
    coords, ok = model.log_chart(np.einsum('ij,kjl->kil', center_inv,
                                           np.asarray(mats)))
    return coords, ok


def _check_support(model, grid, center_coords, radius):
    extent = -grid.chart.axes.origin + grid.chart.axes.spacing / 2.0
    if np.isfinite(model.domain_radius):
        if np.linalg.norm(center_coords) + radius > model.domain_radius * 0.98:
            raise SupportOverflow("bump support leaves the chart domain")
    else:
        if np.any(np.abs(center_coords) + radius > extent * 0.999):
            raise SupportOverflow("bump support leaves the sampled box")


def make_bump_kernel(grid: GroupGrid, center_a, center_b, radius,
                     seed=0, modulation=0.25, hbar=1.0) -> KernelSamples:
    """Smooth compactly supported kernel bump with seeded modulation.

    ``center_a``/``center_b`` are group elements; the support is the joint
    chart ball of the given radius around (center_a, center_b).  Identical
    seeds give identical samples.
    """
    model = grid.model
    ca = np.asarray(center_a)
    cb = np.asarray(center_b)
    _check_support(model, grid, model.log_map(ca), radius)
    _check_support(model, grid, model.log_map(cb), radius)
    ca_inv = np.linalg.inv(ca)
    cb_inv = np.linalg.inv(cb)
    rng = np.random.default_rng(seed)
    n = model.dim_algebra
    wa = rng.normal(size=n)
    wb = rng.normal(size=n)
    pha, phb = rng.uniform(0, 2 * np.pi, size=2)

    def fn(a_mats, b_mats):
        ua, oka = _chart_offset(model, ca_inv, a_mats)
        ub, okb = _chart_offset(model, cb_inv, b_mats)
        r2 = (np.sum(ua ** 2, axis=1) + np.sum(ub ** 2, axis=1)) / radius ** 2
        r2 = np.where(oka & okb, r2, 2.0)
        base = _bump_profile(r2)
        mod = (1.0 + modulation * np.sin(ua @ wa + pha)
               + 1j * modulation * np.sin(ub @ wb + phb))
        return base * mod

    nq = grid.size
    values = np.empty((nq, nq), dtype=complex)
    step = max(1, _CHUNK // nq)
    for start in range(0, nq, step):
        sl = slice(start, min(start + step, nq))
        rows = grid.elements[sl]
        a = np.repeat(rows, nq, axis=0)
        b = np.tile(grid.elements, (rows.shape[0], 1, 1))
        values[sl] = fn(a, b).reshape(rows.shape[0], nq)
    return KernelSamples(grid=grid, values=values, hbar=hbar, analytic=fn)


def make_bump_chart_function(model, center_coords, radius, seed=0,
                             modulation=0.25, complex_part=True):
    """Closure over group elements: bump in chart distance from a center."""
    center = model.exp_map(np.asarray(center_coords, dtype=float))
    c_inv = np.linalg.inv(center)
    rng = np.random.default_rng(seed)
    n = model.dim_algebra
    w = rng.normal(size=n)
    ph = rng.uniform(0, 2 * np.pi)
    wi = rng.normal(size=n)
    phi = rng.uniform(0, 2 * np.pi)

    def fn(mats):
        u, ok = _chart_offset(model, c_inv, np.asarray(mats))
        r2 = np.where(ok, np.sum(u ** 2, axis=1) / radius ** 2, 2.0)
        base = _bump_profile(r2)
        mod = 1.0 + modulation * np.sin(u @ w + ph)
        if complex_part:
            mod = mod + 1j * modulation * np.sin(u @ wi + phi)
        return base * mod

    return fn
