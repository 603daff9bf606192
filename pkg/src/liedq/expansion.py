"""Semiclassical expansion machinery and closed-form product rules.

Contains the order-three expansion evaluator for the star product, the
hbar-scan fit that cross-validates it, Bernoulli-series forms of the left
product with configuration functions and fiber variables, and the exact
degree-two polynomial for products of fiber variables.

Point evaluation of phase-space functions goes through derivative arrays:
left-invariant (Y) derivatives by ordered group-shift stencils, momentum
(Z) derivatives either by finite differences (generic callables) or
exactly through the momentum transform (tilde-backed data).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import bernoulli as _scipy_bernoulli

from .errors import FitIllConditioned, TruncationOrderInvalid
from .grids import AlgebraGrid
from .samples import TildeSamples, as_tilde_function, phase_to_tilde
from .star import FrameDerivativeConfig, StarQuadrature

_MAX_DERIV_ORDER = 3
_X_CHUNK = 60_000


@dataclass(frozen=True)
class BernoulliTable:
    """Bernoulli numbers B_0..B_K in the B_1 = -1/2 convention."""

    values: np.ndarray

    @classmethod
    def build(cls, kmax=12):
        vals = _scipy_bernoulli(kmax)
        table = cls(values=vals)
        assert abs(vals[0] - 1.0) < 1e-12
        assert abs(vals[1] + 0.5) < 1e-12
        assert abs(vals[2] - 1.0 / 6.0) < 1e-12
        assert abs(vals[3]) < 1e-12
        return table

    def __getitem__(self, k):
        return float(self.values[k])

    @property
    def order(self):
        return len(self.values) - 1


@dataclass
class HbarScan:
    """Sampled (f star_hbar g)(x) with polynomial fit coefficients."""

    hbar_values: np.ndarray
    samples: np.ndarray
    fit_coefficients: np.ndarray     # c0..c3
    covariance: np.ndarray           # diagonal variance estimates for c0..c3
    residual: float
    degree: int


# ----------------------------------------------------------------------
# Finite-difference stencils
# ----------------------------------------------------------------------

def _stencil(order):
    if order == 2:
        return np.array([-1.0, 1.0]), np.array([-0.5, 0.5])
    return (np.array([-2.0, -1.0, 1.0, 2.0]),
            np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)


def _ordered_multis(n, order):
    return list(product(range(n), repeat=order))


class _YLattice:
    """Evaluation lattice for an ordered chain of left-invariant shifts."""

    def __init__(self, model, q_mat, y_multi, cfg):
        offsets, weights = _stencil(cfg.order)
        self.weights = []
        mats = [np.asarray(q_mat)]
        wts = [1.0]
        for direction in y_multi:
            ej = np.zeros(model.dim_algebra)
            ej[direction] = 1.0
            new_mats, new_wts = [], []
            for mat, w in zip(mats, wts):
                for o, sw in zip(offsets, weights):
                    new_mats.append(mat @ model.exp_map(o * cfg.step_q * ej))
                    new_wts.append(w * sw / cfg.step_q)
            mats, wts = new_mats, new_wts
        self.mats = np.array(mats)
        self.wts = np.array(wts)


# ----------------------------------------------------------------------
# Phase-space point functions
# ----------------------------------------------------------------------

class TildePhaseFunction:
    """Phase-space function defined by a tilde factor on an algebra grid.

    f(q, p) = sum_X tf(q, X) e^{-i<p,X>/scale} dX.  Momentum derivatives
    are exact (polynomial factors under the sum); left-invariant
    derivatives use ordered shift stencils.
    """

    def __init__(self, model, tilde_fn, grid_X: AlgebraGrid, scale):
        self.model = model
        self.tf = as_tilde_function(tilde_fn)
        self.grid_X = grid_X
        self.scale = float(scale)

    def value_batch(self, q_mats, p_coords):
        q_mats = np.asarray(q_mats)
        p_coords = np.atleast_2d(p_coords)
        nx = self.grid_X.size
        k = q_mats.shape[0]
        qs = np.repeat(q_mats, nx, axis=0)
        vals = self.tf.eval(qs, np.tile(self.grid_X.nodes, (k, 1)),
                            x_flat=np.tile(np.arange(nx), k)).reshape(k, nx)
        phases = np.exp((-1j / self.scale) * (self.grid_X.nodes @ p_coords.T))
        return np.einsum('kx,xk->k', vals, phases) * self.grid_X.cell_volume

    def value(self, q_mat, p):
        return complex(self.value_batch(np.asarray(q_mat)[None], [p])[0])

    def derivative_arrays(self, q_mat, p, cfg, max_order=_MAX_DERIV_ORDER):
        n = self.model.dim_algebra
        nodes = self.grid_X.nodes
        phase = np.exp((-1j / self.scale) * (nodes @ np.asarray(p, float)))
        zmono = {(): phase * self.grid_X.cell_volume}
        for order in range(1, max_order + 1):
            for multi in _ordered_multis(n, order):
                if tuple(sorted(multi)) != multi:
                    continue
                parent = zmono[multi[1:]]
                zmono[multi] = parent * (-1j * nodes[:, multi[0]] / self.scale)
        arrays = {}
        nx = self.grid_X.size
        for ny in range(0, max_order + 1):
            tilde_rows = {}
            for y_multi in _ordered_multis(n, ny):
                lat = _YLattice(self.model, q_mat, y_multi, cfg)
                qk = lat.mats.shape[0]
                qs = np.repeat(lat.mats, nx, axis=0)
                vals = self.tf.eval(qs, np.tile(nodes, (qk, 1)),
                                    x_flat=np.tile(np.arange(nx), qk))
                tilde_rows[y_multi] = lat.wts @ vals.reshape(qk, nx)
            for nz in range(0, max_order + 1 - ny):
                arr = np.zeros((n,) * nz + (n,) * ny, dtype=complex)
                for z_multi in _ordered_multis(n, nz):
                    zkey = tuple(sorted(z_multi))
                    for y_multi in _ordered_multis(n, ny):
                        arr[z_multi + y_multi] = tilde_rows[y_multi] @ zmono[zkey]
                arrays[(nz, ny)] = arr
        return arrays


class SeparablePhaseFunction:
    """Product form u(q) * W(p) with W the transform of a node-sampled factor."""

    def __init__(self, model, u_fn, w_nodes, grid_X: AlgebraGrid, scale):
        self.model = model
        self.u_fn = u_fn
        self.w_nodes = np.asarray(w_nodes, dtype=complex)
        self.grid_X = grid_X
        self.scale = float(scale)

    def value_batch(self, q_mats, p_coords):
        p_coords = np.atleast_2d(p_coords)
        phases = np.exp((-1j / self.scale) * (self.grid_X.nodes @ p_coords.T))
        w = (self.w_nodes @ phases) * self.grid_X.cell_volume
        return self.u_fn(np.asarray(q_mats)) * w

    def value(self, q_mat, p):
        return complex(self.value_batch(np.asarray(q_mat)[None], [p])[0])

    def derivative_arrays(self, q_mat, p, cfg, max_order=_MAX_DERIV_ORDER):
        n = self.model.dim_algebra
        nodes = self.grid_X.nodes
        phase = np.exp((-1j / self.scale) * (nodes @ np.asarray(p, float)))
        base = self.w_nodes * phase * self.grid_X.cell_volume
        zvals = {(): np.sum(base)}
        for order in range(1, max_order + 1):
            for multi in _ordered_multis(n, order):
                if tuple(sorted(multi)) != multi:
                    continue
                mono = np.prod((-1j * nodes[:, list(multi)] / self.scale), axis=1)
                zvals[multi] = np.sum(base * mono)
        yvals = {}
        for ny in range(0, max_order + 1):
            for y_multi in _ordered_multis(n, ny):
                lat = _YLattice(self.model, q_mat, y_multi, cfg)
                yvals[y_multi] = complex(lat.wts @ self.u_fn(lat.mats))
        arrays = {}
        for ny in range(0, max_order + 1):
            for nz in range(0, max_order + 1 - ny):
                arr = np.zeros((n,) * nz + (n,) * ny, dtype=complex)
                for z_multi in _ordered_multis(n, nz):
                    zv = zvals[tuple(sorted(z_multi))]
                    for y_multi in _ordered_multis(n, ny):
                        arr[z_multi + y_multi] = zv * yvals[y_multi]
                arrays[(nz, ny)] = arr
        return arrays


class CallablePhaseFunction:
    """Plain closure f(q_mats, p_coords); all derivatives by differences."""

    def __init__(self, model, fn):
        self.model = model
        self.fn = fn

    def value_batch(self, q_mats, p_coords):
        return self.fn(np.asarray(q_mats), np.atleast_2d(p_coords))

    def value(self, q_mat, p):
        return complex(self.value_batch(np.asarray(q_mat)[None], [p])[0])

    def derivative_arrays(self, q_mat, p, cfg, max_order=_MAX_DERIV_ORDER):
        n = self.model.dim_algebra
        p = np.asarray(p, dtype=float)
        offsets, weights = _stencil(cfg.order)
        arrays = {}
        for ny in range(0, max_order + 1):
            for nz in range(0, max_order + 1 - ny):
                arr = np.zeros((n,) * nz + (n,) * ny, dtype=complex)
                for z_multi in _ordered_multis(n, nz):
                    for y_multi in _ordered_multis(n, ny):
                        lat = _YLattice(self.model, q_mat, y_multi, cfg)
                        total = 0.0 + 0.0j
                        for combo in product(range(len(offsets)), repeat=nz):
                            dp = p.copy()
                            w = 1.0
                            for axis_pos, c in enumerate(combo):
                                dp[z_multi[axis_pos]] += offsets[c] * cfg.step_p
                                w *= weights[c] / cfg.step_p
                            vals = self.fn(lat.mats, np.tile(dp, (lat.mats.shape[0], 1)))
                            total += w * (lat.wts @ vals)
                        arr[z_multi + y_multi] = total
                arrays[(nz, ny)] = arr
        return arrays


def as_phase_function(obj, model=None, cfg=None, grid_X=None):
    """Coerce PhaseSamples / tilde data / callables to a point function."""
    from .samples import PhaseSamples
    if isinstance(obj, PhaseSamples):
        if grid_X is None:
            raise ValueError("grid_X required to lift PhaseSamples")
        t = phase_to_tilde(obj, grid_X)
        return TildePhaseFunction(obj.grid_q.model, t, grid_X, obj.hbar)
    if isinstance(obj, TildeSamples):
        return TildePhaseFunction(obj.grid_q.model, obj, obj.grid_X, obj.hbar)
    if hasattr(obj, "derivative_arrays"):
        return obj
    if callable(obj):
        return CallablePhaseFunction(model, obj)
    raise TypeError(f"cannot interpret {type(obj)!r} as a phase function")


# ----------------------------------------------------------------------
# Bracket and expansion terms
# ----------------------------------------------------------------------

def _bracket_from_arrays(model, p, df, dg):
    zf, yf = df[(1, 0)], df[(0, 1)]
    zg, yg = dg[(1, 0)], dg[(0, 1)]
    c = model.structure_constants
    pk = np.asarray(p, dtype=float)
    val = np.sum(zf * yg) - np.sum(yf * zg)
    val += np.einsum('kij,k,i,j->', c, pk, zf, zg)
    return val


def poisson_bracket_at(f, g, q_mat, p, model, cfg: FrameDerivativeConfig):
    """Pointwise canonical bracket from first derivative arrays."""
    fp = as_phase_function(f, model=model)
    gp = as_phase_function(g, model=model)
    df = fp.derivative_arrays(q_mat, p, cfg, max_order=1)
    dg = gp.derivative_arrays(q_mat, p, cfg, max_order=1)
    return complex(_bracket_from_arrays(model, p, df, dg))


def _b2_term(model, p, df, dg):
    c = model.structure_constants
    pk = np.asarray(p, dtype=float)
    val = np.einsum('ij,ij->', df[(2, 0)], dg[(0, 2)])
    val -= np.einsum('ij,ji->', df[(1, 1)], dg[(1, 1)])
    val += np.einsum('kij,i,jk->', c, df[(1, 0)], dg[(1, 1)])
    val -= 2.0 * np.einsum('k,kij,il,lj->', pk, c, df[(1, 1)], dg[(2, 0)])
    val -= (1.0 / 6.0) * np.einsum('kil,ljk,i,j->', c, c, df[(1, 0)], dg[(1, 0)])
    val += 0.5 * np.einsum('k,l,kij,lrs,ir,js->', pk, pk, c, c,
                           df[(2, 0)], dg[(2, 0)])
    val += (2.0 / 3.0) * np.einsum('k,kil,ljr,ij,r->', pk, c, c,
                                   df[(2, 0)], dg[(1, 0)])
    return val


def _b3_term(model, p, df, dg):
    c = model.structure_constants
    pk = np.asarray(p, dtype=float)
    val = np.einsum('ijk,ijk->', df[(3, 0)], dg[(0, 3)])
    val -= 3.0 * np.einsum('ijk,kij->', df[(2, 1)], dg[(1, 2)])
    val += 3.0 * np.einsum('kij,il,jlk->', c, df[(2, 0)], dg[(1, 2)])
    val -= 3.0 * np.einsum('kij,il,ljk->', c, df[(1, 1)], dg[(2, 1)])
    val += np.einsum('kil,ljk,ir,rj->', c, c, df[(1, 1)], dg[(2, 0)])
    val += 3.0 * np.einsum('k,kij,irs,rsj->', pk, c, df[(1, 2)], dg[(3, 0)])
    val -= 3.0 * np.einsum('k,kij,irs,jsr->', pk, c, df[(2, 1)], dg[(2, 1)])
    val -= 3.0 * np.einsum('k,kij,lrs,irl,js->', pk, c, c, df[(2, 1)], dg[(2, 0)])
    val -= 2.0 * np.einsum('k,kil,ljr,ijs,sr->', pk, c, c, df[(2, 1)], dg[(2, 0)])
    val += 2.0 * np.einsum('k,kil,ljr,js,sri->', pk, c, c, df[(1, 1)], dg[(3, 0)])
    val -= 3.0 * np.einsum('k,l,kij,lrs,irm,mjs->', pk, pk, c, c,
                           df[(2, 1)], dg[(3, 0)])
    val -= np.einsum('slr,lsi,rjk,ij,k->', c, c, c, df[(2, 0)], dg[(1, 0)])
    val -= np.einsum('k,kjl,lim,mrs,ir,js->', pk, c, c, c, df[(2, 0)], dg[(2, 0)])
    val -= 0.5 * np.einsum('k,klm,lij,mrs,ir,js->', pk, c, c, c,
                           df[(2, 0)], dg[(2, 0)])
    val -= np.einsum('k,kij,mrl,lsm,ir,js->', pk, c, c, c, df[(2, 0)], dg[(2, 0)])
    val += 2.0 * np.einsum('k,l,kij,lrm,mst,irs,jt->', pk, pk, c, c, c,
                           df[(3, 0)], dg[(2, 0)])
    val += 0.5 * np.einsum('k,l,m,kij,lrs,mtu,irt,jsu->', pk, pk, pk, c, c, c,
                           df[(3, 0)], dg[(3, 0)])
    return val


def semiclassical_terms(f, g, x, model, cfg: FrameDerivativeConfig):
    """Coefficients (t0..t3) of the hbar expansion of the star product at x.

    t0 = fg, t1 = (i/2){f,g}, t2 and t3 combine the displayed second and
    third order bidifferential operators.  The product equals
    t0 + t1 hbar + t2 hbar^2 + t3 hbar^3 + O(hbar^4).
    """
    q_mat, p = x
    fp = as_phase_function(f, model=model)
    gp = as_phase_function(g, model=model)
    df = fp.derivative_arrays(q_mat, p, cfg)
    dg = gp.derivative_arrays(q_mat, p, cfg)
    t0 = df[(0, 0)].item() * dg[(0, 0)].item()
    t1 = 0.5j * _bracket_from_arrays(model, p, df, dg)
    b2 = _b2_term(model, p, df, dg) + _b2_term(model, p, dg, df)
    t2 = 0.5 * (0.5j) ** 2 * b2
    b3 = _b3_term(model, p, df, dg) - _b3_term(model, p, dg, df)
    t3 = (1.0 / 6.0) * (0.5j) ** 3 * b3
    return complex(t0), complex(t1), complex(t2), complex(t3)


# ----------------------------------------------------------------------
# hbar scan
# ----------------------------------------------------------------------

def fit_hbar_series(hbars, samples):
    """Least-squares polynomial fit returning c0..c3 with nuisance orders."""
    hb = np.asarray(hbars, dtype=float)
    s = np.asarray(samples, dtype=complex)
    distinct = np.unique(hb)
    if distinct.size < 4:
        raise FitIllConditioned("need at least four distinct hbar values")
    degree = 5 if distinct.size >= 6 else 3
    v = np.vander(hb, degree + 1, increasing=True)
    if np.linalg.matrix_rank(v) < degree + 1:
        raise FitIllConditioned("hbar sample set does not determine the fit")
    coef, res, _, _ = np.linalg.lstsq(v, s, rcond=None)
    resid = float(np.linalg.norm(v @ coef - s))
    dof = max(1, hb.size - (degree + 1))
    gram_inv = np.linalg.inv(v.T @ v)
    var = np.diag(gram_inv) * (resid ** 2 / dof)
    return coef[:4], var[:4], resid, degree


def hbar_scan(model, f_tilde, g_tilde, grid_X, x, hbars) -> HbarScan:
    """Sample (f star_hbar g)(x) in the re-parametrized form and fit in hbar.

    ``f_tilde``/``g_tilde`` are hbar-free tilde factors on ``grid_X``; the
    factors stay fixed while hbar varies, so the fitted coefficients are
    directly comparable with the expansion evaluator.
    """
    q_mat, p = x
    hb = np.asarray(hbars, dtype=float)
    if np.any(hb == 0.0):
        raise ValueError("hbar values must be nonzero")
    samples = np.empty(hb.size, dtype=complex)
    for i, h in enumerate(hb):
        quad = StarQuadrature(model, f_tilde, g_tilde, grid_X, h, form="hbar")
        samples[i] = quad.at(q_mat, p)
    coef, var, resid, degree = fit_hbar_series(hb, samples)
    return HbarScan(hbar_values=hb, samples=samples, fit_coefficients=coef,
                    covariance=var, residual=resid, degree=degree)


def scan_bump_pair(model, grid_X, seed=0, q_radius=0.8, x_radius=None):
    """Separable analytic bump pair for scans: tilde factors plus oracles.

    Returns (f_tilde, g_tilde, f_point, g_point) where the point functions
    share the exact Riemann-sum definition used by the scan quadrature.
    """
    from .samples import AnalyticTilde, make_bump_chart_function
    rng = np.random.default_rng(seed)
    if x_radius is None:
        x_radius = 0.9 * float(np.min(-grid_X.axes.origin
                                      + grid_X.axes.spacing / 2.0))
    n = model.dim_algebra
    out = []
    for which in range(2):
        center = 0.15 * rng.normal(size=n)
        u_fn = make_bump_chart_function(model, center, q_radius,
                                        seed=seed * 17 + which,
                                        modulation=0.3)
        wvec = rng.normal(size=n)
        wph = rng.uniform(0, 2 * np.pi)

        def w_fn(x, wvec=wvec, wph=wph):
            x = np.atleast_2d(x)
            r2 = np.sum(x ** 2, axis=1) / x_radius ** 2
            prof = np.zeros(x.shape[0])
            inside = r2 < 1.0
            prof[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
            return prof * (1.0 + 0.3 * np.sin(x @ wvec + wph))

        def tilde_fn(q_mats, x, u_fn=u_fn, w_fn=w_fn):
            return u_fn(q_mats) * w_fn(x)

        f_t = AnalyticTilde(model, tilde_fn, x_nodes=grid_X.nodes)
        f_p = SeparablePhaseFunction(model, u_fn, w_fn(grid_X.nodes),
                                     grid_X, scale=1.0)
        out.extend([f_t, f_p])
    return out[0], out[2], out[1], out[3]


# ----------------------------------------------------------------------
# Left products with configuration functions and fiber variables
# ----------------------------------------------------------------------

def config_left_star(f_fn, g: TildeSamples) -> TildeSamples:
    """Exact left product with a configuration function.

    (f star g)~(q, X) = f(q exp(-X/2)) g~(q, X) for smooth f on G.
    """
    grid_q, grid_X = g.grid_q, g.grid_X
    model = grid_q.model
    e_min = model.exp_chart(-grid_X.nodes / 2.0)
    args = np.einsum('qij,xjk->qxik', grid_q.elements, e_min)
    m = model.matrix_size
    fvals = f_fn(args.reshape(-1, m, m)).reshape(grid_q.size, grid_X.size)
    return TildeSamples(grid_q=grid_q, grid_X=grid_X,
                        values=fvals * g.values, hbar=g.hbar)


def config_left_star_series(f_fn, g: TildeSamples, order,
                            step=0.12) -> TildeSamples:
    """Truncated series form of the configuration-function product.

    The order-K partial sum of sum_k (1/k!)(-1/2)^k (d/dt)^k f(q e^{tX}) g~
    is the degree-K Taylor polynomial of f(q exp(-X/2)) along the ray;
    ray derivatives come from symmetric polynomial interpolation.
    """
    if order < 0:
        raise TruncationOrderInvalid("series order must be nonnegative")
    grid_q, grid_X = g.grid_q, g.grid_X
    model = grid_q.model
    nq, nx = grid_q.size, grid_X.size
    npts = 2 * order + 1
    ts = step * (np.arange(npts) - order)
    v = np.vander(ts / step, npts, increasing=True)
    v_inv = np.linalg.inv(v)
    half = np.array([(-0.5) ** k / step ** k for k in range(order + 1)])
    row = half @ v_inv[:order + 1]        # stencil weights over the ray nodes
    taylor = np.zeros((nq, nx), dtype=complex)
    m = model.matrix_size
    step_x = max(1, _X_CHUNK // max(nq, 1))
    for start in range(0, nx, step_x):
        sl = slice(start, min(start + step_x, nx))
        vals = np.empty((npts, nq * (sl.stop - sl.start)), dtype=complex)
        for s, t in enumerate(ts):
            shifts = model.exp_chart(t * grid_X.nodes[sl])
            mats = np.einsum('qij,xjk->qxik', grid_q.elements, shifts)
            vals[s] = f_fn(mats.reshape(-1, m, m))
        taylor[:, sl] = (row @ vals).reshape(nq, -1)
    return TildeSamples(grid_q=grid_q, grid_X=grid_X,
                        values=taylor * g.values, hbar=g.hbar)


def momentum_left_star_exact(j, g, grid_q, grid_X, hbar,
                             step=1e-3) -> TildeSamples:
    """Exact left product with the fiber variable p_j, in the tilde picture.

    Differentiates the shifted kernel correspondence in the chart:
    out~(q,X) = i hbar [d/dt sg(q e^{-X/2} e^{t X_j}, q e^{X/2})|_0
                        - (1/2) C^k_jk sg(...)] F(X).
    """
    model = grid_q.model
    tf = as_tilde_function(g)
    n = model.dim_algebra
    ej = np.zeros(n)
    ej[j] = 1.0
    trace_c = float(np.einsum('kk->', model.structure_constants[:, j, :]))
    nq, nx = grid_q.size, grid_X.size
    f_x = model.F_vals(grid_X.nodes)
    e_min = model.exp_chart(-grid_X.nodes / 2.0)
    e_pl = model.exp_chart(grid_X.nodes / 2.0)

    def kernel_eval(a_mats, b_mats):
        # sg(a, b) = g~(a exp(V/2), V) / F(V) with V = log(a^{-1} b)
        v, ok = model.log_chart(np.einsum('kij,kjl->kil',
                                          np.linalg.inv(a_mats), b_mats))
        ok &= model.inside(v)
        out = np.zeros(a_mats.shape[0], dtype=complex)
        if np.any(ok):
            arg = np.einsum('kij,kjl->kil', a_mats[ok],
                            model.exp_chart(v[ok] / 2.0))
            out[ok] = tf.eval(arg, v[ok]) / model.F_vals(v[ok])
        return out

    a0 = np.einsum('qij,xjk->qxik', grid_q.elements, e_min)
    b0 = np.einsum('qij,xjk->qxik', grid_q.elements, e_pl)
    m = model.matrix_size
    a0 = a0.reshape(-1, m, m)
    b0 = b0.reshape(-1, m, m)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * step
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * step)
    deriv = np.zeros(nq * nx, dtype=complex)
    for o, w in zip(offsets, weights):
        shift = model.exp_map(o * ej)
        deriv += w * kernel_eval(np.einsum('kij,jl->kil', a0, shift), b0)
    base = kernel_eval(a0, b0)
    values = 1j * hbar * (deriv - 0.5 * trace_c * base)
    values = values.reshape(nq, nx) * f_x
    return TildeSamples(grid_q=grid_q, grid_X=grid_X, values=values, hbar=hbar)


def momentum_left_star_series(j, g, grid_q, grid_X, hbar, order,
                              table: BernoulliTable | None = None,
                              cfg: FrameDerivativeConfig | None = None) -> TildeSamples:
    """Bernoulli series for the left product with a fiber variable.

    Evaluates the contracted form of the expansion: with E = ad_X in basis
    coordinates, the order-k contributions are

      (i hbar / k!) ((1-2^k)/2^{k-1}) B_k [E^{k-1}]^m_j (Y_m g)~
      - i hbar (B_k / k!) d/du_m ([E^k]^m_j g~)
      - (i hbar / 2 k!) sum_l C(k,2l) B_{k-2l} B_{2l} S_j(2l-1, k-2l) g~

    with S_j(a,b) = C^r_{ts} [E^a]^s_r [E^b]^t_j, plus the leading term
    (p_j g)~ = -i hbar dg~/du_j.
    """
    import math as _math

    if table is None:
        table = BernoulliTable.build(max(order, 12))
    if order < 0 or order > table.order:
        raise TruncationOrderInvalid(f"order {order} outside the table range")
    if cfg is None:
        cfg = FrameDerivativeConfig(step_q=1e-3, step_p=1e-3, order=4)
    model = grid_q.model
    tf = as_tilde_function(g)
    n = model.dim_algebra
    c = model.structure_constants
    nq, nx = grid_q.size, grid_X.size
    nodes = grid_X.nodes

    # Base values and first derivatives of g~ on the grid.
    def eval_all(q_mats):
        qs = np.repeat(q_mats, nx, axis=0)
        return tf.eval(qs, np.tile(nodes, (q_mats.shape[0], 1)),
                       x_flat=np.tile(np.arange(nx), q_mats.shape[0])
                       ).reshape(q_mats.shape[0], nx)

    g0 = eval_all(grid_q.elements)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0

    # Left-invariant derivatives (Y_m g)~.
    yg = np.zeros((n, nq, nx), dtype=complex)
    for mdir in range(n):
        ej = np.zeros(n)
        ej[mdir] = 1.0
        acc = np.zeros((nq, nx), dtype=complex)
        for o, w in zip(offsets, weights):
            shift = model.exp_map(o * cfg.step_q * ej)
            acc += w * eval_all(np.einsum('qij,jl->qil', grid_q.elements, shift))
        yg[mdir] = acc / cfg.step_q

    # Chart-coordinate derivatives dg~/du_m at the nodes.
    dug = np.zeros((n, nq, nx), dtype=complex)
    for mdir in range(n):
        em = np.zeros(n)
        em[mdir] = 1.0
        acc = np.zeros((nq, nx), dtype=complex)
        for o, w in zip(offsets, weights):
            xs = nodes + o * cfg.step_p * em
            qs = np.repeat(grid_q.elements, nx, axis=0)
            acc += w * tf.eval(qs, np.tile(xs, (nq, 1))).reshape(nq, nx)
        dug[mdir] = acc / cfg.step_p

    # Powers of ad_X at every node and their coordinate derivatives.
    ad = np.einsum('kji,xj->xki', c, nodes)        # (nx, n, n)
    powers = [np.broadcast_to(np.eye(n), ad.shape).copy()]
    for _ in range(order):
        powers.append(np.einsum('xab,xbc->xac', ad, powers[-1]))
    d_ad = np.einsum('kji->jki', c)                # d(ad)/du_m, (m, n, n)
    dpow = [np.zeros((nx, n, n, n))]               # (nx, m, a, b) for E^0
    for kpow in range(1, order + 1):
        # d(E^k) = sum_r E^r dE E^{k-1-r}
        acc = np.zeros((nx, n, n, n))
        for r in range(kpow):
            acc += np.einsum('xab,mbc,xcd->xmad', powers[r], d_ad,
                             powers[kpow - 1 - r])
        dpow.append(acc)

    values = -1j * hbar * dug[j].copy()            # (p_j g)~ leading term
    for k in range(1, order + 1):
        bk = table[k]
        coeff1 = (1j * hbar / _math.factorial(k)) * ((1.0 - 2.0 ** k) / 2.0 ** (k - 1)) * bk
        if bk != 0.0:
            e_pow = powers[k - 1][:, :, j]          # [E^{k-1}]^m_j -> (nx, m)
            values += coeff1 * np.einsum('xm,mqx->qx', e_pow, yg)
            # term2: -i hbar (B_k/k!) d/du_m ([E^k]^m_j g~)
            coeff2 = -1j * hbar * bk / _math.factorial(k)
            e_k = powers[k][:, :, j]                # (nx, m)
            de_k = dpow[k][:, :, :, j]              # (nx, m_deriv, m_row)
            div = np.einsum('xmm->x', de_k)
            values += coeff2 * (div[None, :] * g0
                                + np.einsum('xm,mqx->qx', e_k, dug))
        # term3 from the weight-factor derivative
        acc3 = np.zeros(nx)
        for length in range(1, k // 2 + 1):
            b1 = table[k - 2 * length]
            b2 = table[2 * length]
            if b1 == 0.0 or b2 == 0.0:
                continue
            s_contr = np.einsum('rts,xsr,xtj->xj', c, powers[2 * length - 1],
                                powers[k - 2 * length])[:, j]
            acc3 += _math.comb(k, 2 * length) * b1 * b2 * s_contr
        if np.any(acc3):
            coeff3 = -0.5 * 1j * hbar / _math.factorial(k)
            values += coeff3 * acc3[None, :] * g0
    return TildeSamples(grid_q=grid_q, grid_X=grid_X, values=values, hbar=hbar)


@dataclass(frozen=True)
class MomentumPairProduct:
    """p_i star p_j as a polynomial: quadratic + linear + constant parts."""

    i: int
    j: int
    linear: np.ndarray        # coefficient of p_k
    constant: complex

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        return p[self.i] * p[self.j] + complex(self.linear @ p) + self.constant


def momentum_pair_product(i, j, model, hbar) -> MomentumPairProduct:
    """p_i star p_j = p_i p_j + (i hbar/2) C^k_ij p_k + (hbar^2/24) C^k_il C^l_jk."""
    c = model.structure_constants
    linear = 0.5j * hbar * c[:, i, j]
    constant = (hbar ** 2 / 24.0) * complex(np.einsum('kl,lk->', c[:, i, :],
                                                      c[:, j, :]))
    return MomentumPairProduct(i=i, j=j, linear=linear.astype(complex),
                               constant=constant)
