"""Star products computed three ways, the Poisson bracket and evolution.

The reference route composes integral kernels (a weighted matrix product,
exact up to grid sampling).  The system under test is the double
phase-space quadrature; the twisted convolution is its momentum-picture
form.  Pair geometry (BCH products, weight factors, shift matrices) is
cached per tilde pair so repeated point evaluations stay cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .grids import AlgebraGrid, MomentumGrid
from .samples import (KernelSamples, PhaseSamples, TildeSamples,
                      as_tilde_function, kernel_to_tilde)

_PAIR_CHUNK = 400_000


@dataclass
class FrameDerivativeConfig:
    """Finite-difference steps for the left-invariant frame derivatives."""

    step_q: float = 0.02
    step_p: float = 0.02
    order: int = 4

    def __post_init__(self):
        if self.step_q <= 0 or self.step_p <= 0:
            raise ValueError("finite-difference steps must be positive")
        if self.order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")


def _check_kernel_pair(f: KernelSamples, g: KernelSamples):
    if f.grid is not g.grid:
        raise GridMismatch("kernels must share the group grid")
    if f.hbar != g.hbar:
        raise GridMismatch("kernels must share hbar")


# ----------------------------------------------------------------------
# Kernel-composition route (reference)
# ----------------------------------------------------------------------

def star_via_kernels(f: KernelSamples, g: KernelSamples) -> KernelSamples:
    """sh(a,b) = sum_c w_c sf(a,c) sg(c,b); exact up to quadrature."""
    _check_kernel_pair(f, g)
    w = f.grid.haar_weights
    values = (f.values * w) @ g.values
    return KernelSamples(grid=f.grid, values=values, hbar=f.hbar)


def compose_kernel_closure(f: KernelSamples, g: KernelSamples):
    """Closure for the composed kernel at arbitrary argument pairs.

    Evaluates the same Haar sum as star_via_kernels but at off-node
    (a, b), available when both factors carry analytic closures.
    """
    _check_kernel_pair(f, g)
    if f.analytic is None or g.analytic is None:
        raise ValueError("composition closure requires analytic factors")
    grid = f.grid
    w = grid.haar_weights
    cs = grid.elements

    def fn(a_mats, b_mats):
        a_mats = np.asarray(a_mats)
        b_mats = np.asarray(b_mats)
        out = np.empty(a_mats.shape[0], dtype=complex)
        n = grid.size
        for i in range(a_mats.shape[0]):
            fa = f.analytic(np.broadcast_to(a_mats[i], cs.shape), cs)
            gb = g.analytic(cs, np.broadcast_to(b_mats[i], cs.shape))
            out[i] = np.sum(w * fa * gb)
        return out

    return fn


def kernel_route_phase_values(kernel_fn, model, grid_X: AlgebraGrid, hbar,
                              q_mat, p_coords):
    """Phase-picture values at one q from a kernel closure.

    Evaluates f~(q, X) = sf(q e^{-X/2}, q e^{X/2}) F(X) on the algebra grid
    and applies the inverse momentum transform at the requested p.
    """
    p_coords = np.atleast_2d(p_coords)
    e_min = model.exp_chart(-grid_X.nodes / 2.0)
    e_pl = model.exp_chart(grid_X.nodes / 2.0)
    a = np.einsum('ij,xjk->xik', q_mat, e_min)
    b = np.einsum('ij,xjk->xik', q_mat, e_pl)
    tilde = kernel_fn(a, b) * model.F_vals(grid_X.nodes)
    phases = np.exp((-1j / hbar) * (grid_X.nodes @ p_coords.T))
    return (tilde @ phases) * grid_X.cell_volume


# ----------------------------------------------------------------------
# Phase-space quadrature route
# ----------------------------------------------------------------------

class StarQuadrature:
    """Double Riemann sum for the star product at phase-space points.

    ``form="physical"`` realizes the hbar-scaled integral; ``form="hbar"``
    the re-parametrized product star_hbar with the hbar-free transform, in
    which the factors stay fixed while hbar varies.
    """

    def __init__(self, model, f_tilde, g_tilde, grid_X: AlgebraGrid, hbar,
                 grid_Y: AlgebraGrid | None = None, form="physical"):
        if form not in ("physical", "hbar"):
            raise ValueError("form must be 'physical' or 'hbar'")
        self.model = model
        self.hbar = float(hbar)
        self.form = form
        self.f = as_tilde_function(f_tilde)
        self.g = as_tilde_function(g_tilde)
        self.grid_X = grid_X
        self.grid_Y = grid_Y if grid_Y is not None else grid_X
        self._build_geometry()

    def _build_geometry(self):
        model = self.model
        nx, ny = self.grid_X.size, self.grid_Y.size
        xi, yi = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        self._xi = xi.ravel()
        self._yi = yi.ravel()
        x = self.grid_X.nodes[self._xi]
        y = self.grid_Y.nodes[self._yi]
        scale = 1.0 if self.form == "physical" else self.hbar
        z_scaled, ok = model.bch_chart(scale * x, scale * y)
        lw = np.zeros(x.shape[0])
        if np.any(ok):
            lw[ok] = (model.F_vals(scale * x[ok]) * model.F_vals(scale * y[ok])
                      / model.F_vals(z_scaled[ok]))
        self._weight = lw * self.grid_X.cell_volume * self.grid_Y.cell_volume
        self._ok = ok
        # Chart coordinate of the BCH product entering the phase factor.
        self._z_phase = np.zeros_like(x)
        self._z_phase[ok] = z_scaled[ok] / scale
        # Left factors of the two shifted arguments, independent of q.
        a_shift = np.einsum('kij,kjl->kil',
                            model.exp_chart(-z_scaled / 2.0),
                            model.exp_chart(scale * x / 2.0))
        b_shift = np.einsum('kij,kjl->kil',
                            model.exp_chart(z_scaled / 2.0),
                            model.exp_chart(-scale * y / 2.0))
        self._a_shift = a_shift
        self._b_shift = b_shift

    def at(self, q_mat, p_coords):
        """Value of (f star g)(q, p)."""
        p = np.asarray(p_coords, dtype=float)
        total = 0.0 + 0.0j
        npairs = self._xi.size
        hb = self.hbar if self.form == "physical" else 1.0
        for start in range(0, npairs, _PAIR_CHUNK):
            sl = slice(start, min(start + _PAIR_CHUNK, npairs))
            ok = self._ok[sl]
            if not np.any(ok):
                continue
            a = np.einsum('ij,kjl->kil', q_mat, self._a_shift[sl][ok])
            b = np.einsum('ij,kjl->kil', q_mat, self._b_shift[sl][ok])
            fv = self.f.eval(a, self.grid_X.nodes[self._xi[sl][ok]],
                             x_flat=self._xi[sl][ok])
            gv = self.g.eval(b, self.grid_Y.nodes[self._yi[sl][ok]],
                             x_flat=self._yi[sl][ok])
            phase = np.exp((-1j / hb) * (self._z_phase[sl][ok] @ p))
            total += np.sum(fv * gv * phase * self._weight[sl][ok])
        return complex(total)


def star_via_quadrature(f, g, q_mat, p_coords, grid_X=None, hbar=None,
                        model=None):
    """Eq.-style double quadrature of the star product at one (q, p).

    ``f``/``g`` may be TildeSamples (chart interpolation) or analytic tilde
    functions; sampled inputs supply the grids and hbar.
    """
    if isinstance(f, TildeSamples):
        model = f.grid_q.model
        grid_X = f.grid_X if grid_X is None else grid_X
        hbar = f.hbar if hbar is None else hbar
        if isinstance(g, TildeSamples):
            if g.hbar != f.hbar:
                raise GridMismatch("tilde factors must share hbar")
            if g.grid_q.model is not model:
                raise GridMismatch("tilde factors must share the model")
    if grid_X is None or hbar is None or model is None:
        raise ValueError("grid_X, hbar and model are required for analytic input")
    quad = StarQuadrature(model, f, g, grid_X, hbar)
    return quad.at(q_mat, p_coords)


def moyal_double_sum(f: TildeSamples, g: TildeSamples, q_mat, p_coords):
    """Independent flat-space double integral (shifts q -/+ Y/2, X/2).

    Valid on the abelian model only; used to check that the general
    quadrature reduces to it там.
    """
    model = f.grid_q.model
    if model.name.split(":")[0] != "rn":
        raise ValueError("the flat double integral is defined on rn models")
    ff = as_tilde_function(f)
    gf = as_tilde_function(g)
    n = model.dim_algebra
    x = f.grid_X.nodes
    y = g.grid_X.nodes
    q = model.log_map(q_mat)
    p = np.asarray(p_coords, dtype=float)
    total = 0.0 + 0.0j
    for k in range(x.shape[0]):
        qa = model.exp_chart(q - y / 2.0)
        qb = model.exp_chart(np.broadcast_to(q + x[k] / 2.0, y.shape))
        fv = ff.eval(qa, np.broadcast_to(x[k], y.shape),
                     x_flat=np.full(y.shape[0], k))
        gv = gf.eval(qb, y, x_flat=np.arange(y.shape[0]))
        phase = np.exp((-1j / f.hbar) * ((x[k] + y) @ p))
        total += np.sum(fv * gv * phase)
    return complex(total * f.grid_X.cell_volume * g.grid_X.cell_volume)


# ----------------------------------------------------------------------
# Twisted convolution
# ----------------------------------------------------------------------

def twisted_convolution(f: TildeSamples, g: TildeSamples) -> TildeSamples:
    """(f~ . g~)(q, X): the momentum-picture form of the star product."""
    if f.grid_q is not g.grid_q or f.grid_X is not g.grid_X:
        raise GridMismatch("twisted convolution requires shared grids")
    if f.hbar != g.hbar:
        raise GridMismatch("twisted convolution requires equal hbar")
    model = f.grid_q.model
    grid_q, grid_X = f.grid_q, f.grid_X
    ff = as_tilde_function(f)
    gf = as_tilde_function(g)
    neg = grid_X.negation_index()
    nq, nx = grid_q.size, grid_X.size
    q_el = grid_q.elements
    out = np.zeros((nq, nx), dtype=complex)
    y = grid_X.nodes
    det_ad = np.ones(nx) if model.unimodular else np.array(
        [model.det_Ad(m) for m in model.exp_chart(-y / 2.0)])
    for k in range(nx):
        xk = grid_X.nodes[k]
        z, ok = model.bch_chart(np.broadcast_to(xk, y.shape), y)
        if not np.any(ok):
            continue
        lw = np.zeros(nx)
        lw[ok] = (model.F_vals(np.broadcast_to(xk, y[ok].shape))
                  * model.F_vals(y[ok]) / model.F_vals(z[ok]))
        a_shift = np.einsum('ij,kjl->kil', model.exp_map(-xk / 2.0),
                            model.exp_chart(z / 2.0))
        b_shift = np.einsum('ij,kjl->kil', model.exp_map(xk / 2.0),
                            model.exp_chart(y / 2.0))
        wy = lw * det_ad * grid_X.cell_volume
        live = ok & (wy != 0.0)
        if not np.any(live):
            continue
        for qs in range(0, nq, max(1, _PAIR_CHUNK // int(live.sum()))):
            qe = slice(qs, min(qs + max(1, _PAIR_CHUNK // int(live.sum())), nq))
            nq_c = qe.stop - qe.start
            a = np.einsum('qij,kjl->qkil', q_el[qe], a_shift[live])
            b = np.einsum('qij,kjl->qkil', q_el[qe], b_shift[live])
            m = model.matrix_size
            fv = ff.eval(a.reshape(-1, m, m), np.tile(z[live], (nq_c, 1)))
            gv = gf.eval(b.reshape(-1, m, m), np.tile(-y[live], (nq_c, 1)),
                         x_flat=np.tile(neg[live], nq_c))
            vals = (fv * gv).reshape(nq_c, -1)
            out[qe, k] = vals @ wy[live]
    return TildeSamples(grid_q=grid_q, grid_X=grid_X, values=out, hbar=f.hbar)


# ----------------------------------------------------------------------
# Commutator, Poisson bracket, evolution
# ----------------------------------------------------------------------

def star_commutator(f: KernelSamples, g: KernelSamples) -> KernelSamples:
    """(f star g - g star f) / (i hbar)."""
    _check_kernel_pair(f, g)
    fg = star_via_kernels(f, g)
    gf = star_via_kernels(g, f)
    values = (fg.values - gf.values) / (1j * f.hbar)
    return KernelSamples(grid=f.grid, values=values, hbar=f.hbar)


def _momentum_gradients(values, grid_p: MomentumGrid):
    shape = values.shape[:-1] + tuple(grid_p.axes.counts)
    cube = values.reshape(shape)
    grads = []
    for d in range(grid_p.axes.ndim):
        g = np.gradient(cube, grid_p.axes.spacing[d], axis=values.ndim - 1 + d)
        grads.append(g.reshape(values.shape))
    return grads


def _group_shift_matrices(grid_q, direction, step, order):
    """Stencil matrices for the left-invariant derivative along X_j."""
    model = grid_q.model
    ej = np.zeros(model.dim_algebra)
    ej[direction] = 1.0
    mats = {}
    offsets = (-1, 1) if order == 2 else (-2, -1, 1, 2)
    for k in offsets:
        shift = model.exp_map(k * step * ej)
        targets = np.einsum('qij,jl->qil', grid_q.elements, shift)
        mats[k] = grid_q.shift_stencil_matrix(targets)
    if order == 2:
        return (mats[1] - mats[-1]) / (2.0 * step)
    return (-mats[2] + 8.0 * mats[1] - 8.0 * mats[-1] + mats[-2]) / (12.0 * step)


def poisson_bracket(f: PhaseSamples, g: PhaseSamples,
                    cfg: FrameDerivativeConfig) -> PhaseSamples:
    """{f,g} = Z^i f Y_i g - Y_i f Z^i g + p_k C^k_ij Z^i f Z^j g."""
    if f.grid_q is not g.grid_q or f.grid_p is not g.grid_p:
        raise GridMismatch("poisson bracket requires shared grids")
    model = f.grid_q.model
    n = model.dim_algebra
    zf = _momentum_gradients(f.values, f.grid_p)
    zg = _momentum_gradients(g.values, g.grid_p)
    out = np.zeros_like(f.values)
    c = model.structure_constants
    p_nodes = f.grid_p.nodes
    for i in range(n):
        d_i = _group_shift_matrices(f.grid_q, i, cfg.step_q, cfg.order)
        yf = d_i @ f.values
        yg = d_i @ g.values
        out += zf[i] * yg - yf * zg[i]
    # p_k C^k_ij Z^i f Z^j g
    for i in range(n):
        for j in range(n):
            ck = c[:, i, j]
            if np.all(ck == 0.0):
                continue
            pk = p_nodes @ ck
            out += pk[None, :] * zf[i] * zg[j]
    return PhaseSamples(grid_q=f.grid_q, grid_p=f.grid_p, values=out,
                        hbar=f.hbar)


def evolution_step(h: KernelSamples, rho: KernelSamples, dt: float) -> KernelSamples:
    """Explicit midpoint step of d rho/dt = [[H, rho]]."""
    _check_kernel_pair(h, rho)
    k1 = star_commutator(h, rho)
    mid = KernelSamples(grid=rho.grid, values=rho.values + 0.5 * dt * k1.values,
                        hbar=rho.hbar)
    k2 = star_commutator(h, mid)
    return KernelSamples(grid=rho.grid, values=rho.values + dt * k2.values,
                         hbar=rho.hbar)
