"""Operator representation on L2(G, dm).

Kernels act as integral operators through the Haar-weighted node sum; the
quantizer family realizes the same representation through reflections and
momentum phases, giving an independent quantization route and the inverse
(dequantization) map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GridMismatch, StencilOverflow
from .grids import GroupGrid
from .samples import KernelSamples, PhaseSamples, make_bump_chart_function
from .star import star_via_kernels


@dataclass
class WaveFunction:
    """Complex amplitudes on the group grid, optionally with a closure."""

    grid: GroupGrid
    values: np.ndarray
    analytic: Optional[Callable] = None

    def norm(self):
        return float(np.sqrt(np.sum(self.grid.haar_weights
                                    * np.abs(self.values) ** 2)))

    def inner(self, other: "WaveFunction"):
        if self.grid is not other.grid:
            raise GridMismatch("wave functions must share the grid")
        return complex(np.sum(self.grid.haar_weights
                              * np.conj(self.values) * other.values))


@dataclass
class OperatorMatrix:
    """Integral operator: (A psi)(a_i) = sum_j w_j A(a_i, b_j) psi(b_j)."""

    grid: GroupGrid
    entries: np.ndarray
    hbar: float

    @classmethod
    def from_raw_map(cls, raw, grid, hbar):
        """Wrap a plain linear map on node values as an integral operator."""
        return cls(grid=grid, entries=raw / grid.haar_weights[None, :],
                   hbar=hbar)

    @property
    def raw_map(self):
        return self.entries * self.grid.haar_weights[None, :]

    def apply(self, psi: WaveFunction) -> WaveFunction:
        if psi.grid is not self.grid:
            raise GridMismatch("operator and wave function grids differ")
        return WaveFunction(grid=self.grid, values=self.raw_map @ psi.values)

    def compose(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.grid is not self.grid:
            raise GridMismatch("operator grids differ")
        w = self.grid.haar_weights
        return OperatorMatrix(grid=self.grid,
                              entries=(self.entries * w) @ other.entries,
                              hbar=self.hbar)

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(grid=self.grid, entries=self.entries.conj().T,
                              hbar=self.hbar)

    def trace(self):
        return complex(self.grid.haar_weights @ np.diag(self.entries))

    def hs_inner(self, other: "OperatorMatrix"):
        if other.grid is not self.grid:
            raise GridMismatch("operator grids differ")
        w = self.grid.haar_weights
        return complex(np.einsum('i,ij,j->', w,
                                 self.entries.conj() * other.entries, w))

    def hs_norm(self):
        return float(np.sqrt(self.hs_inner(self).real))

    def weighted_matrix(self):
        """Similarity transform making the L2(w) action an ordinary matrix."""
        s = np.sqrt(self.grid.haar_weights)
        return s[:, None] * self.entries * s[None, :]

    def operator_norm(self, iters=120, seed=0):
        """Largest singular value of the L2(w) action by power iteration."""
        m = self.weighted_matrix()
        rng = np.random.default_rng(seed)
        v = rng.normal(size=m.shape[0]) + 1j * rng.normal(size=m.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            v = m.conj().T @ (m @ v)
            lam = np.linalg.norm(v)
            v /= lam
        return float(np.sqrt(lam))


@dataclass
class StateDiagnostics:
    """Self-adjointness, normalization, positivity and purity residuals."""

    hermiticity_residual: float
    trace_value: complex
    min_eigenvalue: float
    purity_residual: float

    def is_state(self, trace_tol=1e-6, eig_floor=-1e-8):
        return (self.hermiticity_residual <= trace_tol
                and abs(self.trace_value - 1.0) <= trace_tol
                and self.min_eigenvalue >= eig_floor)


# ----------------------------------------------------------------------
# Quantization maps
# ----------------------------------------------------------------------

def quantize_kernel(f: KernelSamples) -> OperatorMatrix:
    """The operator whose integral kernel is sf itself."""
    return OperatorMatrix(grid=f.grid, entries=f.values.copy(), hbar=f.hbar)


def wigner_transform(phi: WaveFunction, psi: WaveFunction,
                     hbar: float) -> KernelSamples:
    """Kernel of the rank-one operator psi (phi, .): sf(a,b) = psi(a) conj(phi(b))."""
    if phi.grid is not psi.grid:
        raise GridMismatch("wave functions must share the grid")
    values = np.outer(psi.values, np.conj(phi.values))
    fn = None
    if phi.analytic is not None and psi.analytic is not None:
        pa, sa = phi.analytic, psi.analytic
        fn = lambda a, b: sa(a) * np.conj(pa(b))
    return KernelSamples(grid=phi.grid, values=values, hbar=hbar, analytic=fn)


def _quantizer_node_data(grid: GroupGrid, q_mat):
    """Chart offsets, reflection targets and j-weights at the grid nodes."""
    model = grid.model
    q_inv = np.linalg.inv(q_mat)
    v, ok = model.log_chart(np.einsum('ij,kjl->kil', q_inv, grid.elements))
    chi = model.inside(2.0 * v) & ok
    j = np.where(chi, model.psi_det_vals(v), 0.0)
    refl = np.einsum('ij,kjl,lm->kim', q_mat,
                     np.linalg.inv(grid.elements), q_mat)
    if not model.unimodular:
        det_ad = np.array([model.det_Ad(g) for g in
                           np.einsum('ij,kjl->kil', q_inv, grid.elements)])
    else:
        det_ad = np.ones(grid.size)
    return v, j, j * det_ad, refl, ok


def quantizer_apply(x, psi: WaveFunction, hbar: float) -> WaveFunction:
    """Reflection-quantizer action at x = (q, p).

    (D_x psi)(a) = |pi hbar|^-n sqrt(J_q(a)) e^{-2i<p,V_q(a)>/hbar}
    psi(s_q(a)); nodes outside the chart or with vanishing weight give 0.
    """
    q_mat, p = x
    grid = psi.grid
    model = grid.model
    n = model.dim_algebra
    v, j, jj, refl, ok = _quantizer_node_data(grid, q_mat)
    if psi.analytic is not None:
        refl_vals = psi.analytic(refl)
    else:
        refl_vals = grid.evaluate_at_elements(psi.values, refl)
    phase = np.exp((-2j / hbar) * (v @ np.asarray(p, dtype=float)))
    values = (np.sqrt(jj) * phase * refl_vals) / abs(np.pi * hbar) ** n
    values[~ok] = 0.0
    return WaveFunction(grid=grid, values=values)


def quantize_via_quantizer(f: PhaseSamples,
                           out_grid: GroupGrid | None = None) -> OperatorMatrix:
    """hat f = sum_x f(x) D_x dx over the phase-space grid.

    The operator lives on ``out_grid`` (default: the grid carrying f).  On
    abelian models the integration grid must be staggered against the
    output grid (e.g. twice the resolution), otherwise reflections land on
    an even sublattice of node pairs.
    """
    grid = f.grid_q
    out_grid = grid if out_grid is None else out_grid
    if out_grid.model is not grid.model:
        raise GridMismatch("integration and output grids differ in model")
    model = grid.model
    n = model.dim_algebra
    hbar = f.hbar
    dp = f.grid_p.cell_volume
    p_nodes = f.grid_p.nodes
    raw = np.zeros((out_grid.size, out_grid.size), dtype=complex)
    for k in range(grid.size):
        v, j, jj, refl, ok = _quantizer_node_data(out_grid, grid.elements[k])
        live = ok & (jj > 0.0)
        if not np.any(live):
            continue
        phases = np.exp((-2j / hbar) * (v[live] @ p_nodes.T))
        s = phases @ (f.values[k] * dp)
        coef = np.zeros(out_grid.size, dtype=complex)
        coef[live] = np.sqrt(jj[live]) * s / abs(np.pi * hbar) ** n
        stencil = out_grid.shift_stencil_matrix(refl)
        raw += grid.haar_weights[k] * (coef[:, None] * stencil)
    return OperatorMatrix.from_raw_map(raw, out_grid, hbar)


def dequantize(x, a_op: OperatorMatrix) -> complex:
    """f(x) = |2 pi hbar|^n Tr(D_x hat f)."""
    q_mat, p = x
    grid = a_op.grid
    model = grid.model
    n = model.dim_algebra
    hbar = a_op.hbar
    v, j, jj, refl, ok = _quantizer_node_data(grid, q_mat)
    stencil = grid.shift_stencil_matrix(refl)
    diag = np.einsum('ac,ca->a', stencil, a_op.entries)
    phase = np.exp((-2j / hbar) * (v @ np.asarray(p, dtype=float)))
    eta = np.where(ok, np.sqrt(jj) * phase, 0.0) / abs(np.pi * hbar) ** n
    tr = np.sum(grid.haar_weights * eta * diag)
    return complex(abs(2.0 * np.pi * hbar) ** n * tr)


# ----------------------------------------------------------------------
# Momentum operators and observables
# ----------------------------------------------------------------------

def _stencil_1d(order):
    if order == 2:
        return np.array([-1.0, 1.0]), np.array([-0.5, 0.5])
    return (np.array([-2.0, -1.0, 1.0, 2.0]),
            np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)


def left_derivative_matrix(grid: GroupGrid, direction, step, order=2):
    """Raw map for the left-invariant derivative along basis direction j."""
    model = grid.model
    ej = np.zeros(model.dim_algebra)
    ej[direction] = 1.0
    offsets, weights = _stencil_1d(order)
    out = np.zeros((grid.size, grid.size))
    for o, w in zip(offsets, weights):
        shift = model.exp_map(o * step * ej)
        targets = np.einsum('qij,jl->qil', grid.elements, shift)
        out = out + (w / step) * grid.shift_stencil_matrix(targets)
    return out


def _check_stencil_support(psi: WaveFunction, step):
    # Grid-sampled data must keep its mass away from the sampled hull edge.
    grid = psi.grid
    scale = np.max(np.abs(psi.values))
    if scale == 0.0:
        return
    hot = np.abs(psi.values) > 1e-10 * scale
    coords = grid.chart_nodes[hot]
    hull_hi = grid.chart.axes.origin + grid.chart.axes.spacing * (
        np.asarray(grid.chart.axes.counts) - 0.5)
    hull_lo = grid.chart.axes.origin - grid.chart.axes.spacing * 0.5
    margin = 2.0 * step
    if np.any(coords > hull_hi - margin) or np.any(coords < hull_lo + margin):
        raise StencilOverflow("wave function support reaches the grid edge")


def p_hat_apply(direction, psi: WaveFunction, hbar,
                step=0.05, order=2) -> WaveFunction:
    """p-hat_j psi = i hbar (L_{X_j} psi - (1/2) C^k_jk psi).

    Wave functions carrying an analytic closure are differentiated by
    exact off-grid evaluation (and the result stays closed under nesting);
    plain samples fall back to chart interpolation.
    """
    grid = psi.grid
    model = grid.model
    trace_c = float(np.einsum('kk->',
                              model.structure_constants[:, direction, :]))
    ej = np.zeros(model.dim_algebra)
    ej[direction] = 1.0
    offsets, weights = _stencil_1d(order)
    if psi.analytic is not None:
        fn0 = psi.analytic

        def fn(mats, fn0=fn0):
            mats = np.asarray(mats)
            acc = np.zeros(mats.shape[0], dtype=complex)
            for o, w in zip(offsets, weights):
                shift = model.exp_map(o * step * ej)
                acc += (w / step) * fn0(np.einsum('kij,jl->kil', mats, shift))
            return 1j * hbar * (acc - 0.5 * trace_c * fn0(mats))

        return WaveFunction(grid=grid, values=fn(grid.elements), analytic=fn)
    _check_stencil_support(psi, step)
    raw = left_derivative_matrix(grid, direction, step, order)
    values = 1j * hbar * (raw @ psi.values - 0.5 * trace_c * psi.values)
    return WaveFunction(grid=grid, values=values)


def p_hat_operator(grid: GroupGrid, direction, hbar, step=0.05,
                   order=2) -> OperatorMatrix:
    """Matrix form of p-hat_j on the grid."""
    model = grid.model
    trace_c = float(np.einsum('kk->',
                              model.structure_constants[:, direction, :]))
    raw = left_derivative_matrix(grid, direction, step, order)
    raw = 1j * hbar * (raw - 0.5 * trace_c * np.eye(grid.size))
    return OperatorMatrix.from_raw_map(raw, grid, hbar)


def _node_values(grid, fn_or_values):
    if callable(fn_or_values):
        return np.asarray(fn_or_values(grid.elements), dtype=complex)
    return np.asarray(fn_or_values, dtype=complex)


def linear_observable_operator(f_components, grid: GroupGrid, hbar,
                               step=0.05, order=2) -> OperatorMatrix:
    """Operator of f^i(q) p_i in symmetric ordering."""
    n = grid.model.dim_algebra
    raw = np.zeros((grid.size, grid.size), dtype=complex)
    for i in range(n):
        fi = _node_values(grid, f_components[i])
        pi = p_hat_operator(grid, i, hbar, step, order).raw_map
        raw += 0.5 * (fi[:, None] * pi + pi * fi[None, :])
    return OperatorMatrix.from_raw_map(raw, grid, hbar)


def quadratic_observable_operator(f_matrix, grid: GroupGrid, hbar,
                                  step=0.05, order=2) -> OperatorMatrix:
    """Operator of f^{ij}(q) p_i p_j with the curvature-type correction.

    Symmetrized ordering (1/4 f pp + 1/2 p f p + 1/4 pp f) plus the
    potential shift -(hbar^2/24) C^k_il C^l_jk f^{ij}.
    """
    model = grid.model
    n = model.dim_algebra
    c = model.structure_constants
    vals = [[_node_values(grid, f_matrix[i][j]) for j in range(n)]
            for i in range(n)]
    for i in range(n):
        for j in range(n):
            if np.max(np.abs(vals[i][j] - vals[j][i])) > 1e-12:
                raise ValueError("quadratic coefficients must be symmetric")
    p_ops = [p_hat_operator(grid, i, hbar, step, order).raw_map
             for i in range(n)]
    raw = np.zeros((grid.size, grid.size), dtype=complex)
    correction = np.zeros(grid.size, dtype=complex)
    for i in range(n):
        for j in range(n):
            fij = vals[i][j]
            pij = p_ops[i] @ p_ops[j]
            raw += 0.25 * fij[:, None] * pij
            raw += 0.5 * p_ops[i] @ (fij[:, None] * p_ops[j])
            raw += 0.25 * pij * fij[None, :]
            correction += -(hbar ** 2 / 24.0) * np.einsum(
                'kl,lk->', c[:, i, :], c[:, j, :]) * fij
    raw += np.diag(correction)
    return OperatorMatrix.from_raw_map(raw, grid, hbar)


# ----------------------------------------------------------------------
# State diagnostics and norms
# ----------------------------------------------------------------------

def state_diagnostics(rho: KernelSamples) -> StateDiagnostics:
    """Hermiticity, trace, spectral floor and purity of a candidate state."""
    from .samples import trace_functional
    herm = KernelSamples(grid=rho.grid,
                         values=rho.values - rho.values.conj().T,
                         hbar=rho.hbar)
    herm_res = herm.l2_norm()
    trace = trace_functional(rho)
    op = quantize_kernel(rho)
    m = op.weighted_matrix()
    eigs = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
    purity = KernelSamples(grid=rho.grid,
                           values=star_via_kernels(rho, rho).values - rho.values,
                           hbar=rho.hbar)
    return StateDiagnostics(hermiticity_residual=herm_res,
                            trace_value=trace,
                            min_eigenvalue=float(eigs[0]),
                            purity_residual=purity.l2_norm())


def cstar_norm_via_star(f: KernelSamples, iters=120, seed=0):
    """sup ||f star h||_2 / ||h||_2 by iterating conj(f) star (f star h)."""
    rng = np.random.default_rng(seed)
    n = f.grid.size
    h = KernelSamples(grid=f.grid,
                      values=rng.normal(size=(n, n))
                      + 1j * rng.normal(size=(n, n)),
                      hbar=f.hbar)
    fbar = f.conj_transpose()
    lam = 0.0
    for _ in range(iters):
        h = star_via_kernels(fbar, star_via_kernels(f, h))
        lam = h.l2_norm()
        h = KernelSamples(grid=f.grid, values=h.values / lam, hbar=f.hbar)
    return float(np.sqrt(lam))


def make_bump_wavefunction(grid: GroupGrid, center_coords, radius, seed=0,
                           modulation=0.25) -> WaveFunction:
    """Compactly supported wave function with an analytic closure."""
    fn = make_bump_chart_function(grid.model, center_coords, radius,
                                  seed=seed, modulation=modulation)
    return WaveFunction(grid=grid, values=fn(grid.elements), analytic=fn)
