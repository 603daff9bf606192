"""Weakly exponential matrix Lie groups with exponential-chart geometry.

Four concrete models are provided: the translation group R^n (as affine
matrices), SO(3), SU(2) and SL(2,C) viewed as a six-dimensional real Lie
group.  Algebra elements are coordinate vectors in the model basis, group
elements are plain numpy matrices.  Every model exposes a scalar API
(exp_map, log_map, bch, ...) plus vectorized chart operations (exp_chart,
log_chart, bch_chart, F_vals, ...) used by the quadrature engines.

The analytic weight factors entering the star product are the entire
functions of ad_X

    phi(x) = (1 - e^{-x}) / x
    psi(x) = (x/2) coth(x/2)
    lam(x) = (2/x) sinh(x/2)

applied via eigendecomposition, with a truncated power series fallback
near eigenvalue collisions.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import OutsideDomain

# Relative guard band: chart boundary points are treated as outside.
DOMAIN_GUARD = 1e-9

_SERIES_TERMS = 40


# ----------------------------------------------------------------------
# Entire functions phi, psi, lambda
# ----------------------------------------------------------------------

def _bernoulli_even(count):
    # B_0, B_2, B_4, ... via the recursive definition; exact in float
    # for the handful of terms needed here.
    n_max = 2 * count
    b = np.zeros(n_max + 1)
    b[0] = 1.0
    for m in range(1, n_max + 1):
        acc = 0.0
        for k in range(m):
            acc += math.comb(m + 1, k) * b[k]
        b[m] = -acc / (m + 1)
    return b[0::2][:count]


@lru_cache(maxsize=None)
def _series_coefficients(kind):
    k = np.arange(_SERIES_TERMS)
    if kind == "phi":
        return np.array([(-1.0) ** j / math.factorial(j + 1) for j in k])
    if kind == "lam":
        c = np.zeros(_SERIES_TERMS)
        c[0::2] = [1.0 / (4.0 ** m * math.factorial(2 * m + 1))
                   for m in range((_SERIES_TERMS + 1) // 2)]
        return c
    if kind == "psi":
        c = np.zeros(_SERIES_TERMS)
        even = _bernoulli_even((_SERIES_TERMS + 1) // 2)
        c[0::2] = [even[m] / math.factorial(2 * m)
                   for m in range((_SERIES_TERMS + 1) // 2)]
        return c
    raise ValueError(f"unknown entire function kind: {kind}")


def entire_scalar(kind, x):
    """Evaluate phi/psi/lam at scalar (complex) arguments, series-safe at 0."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    coeff = _series_coefficients(kind)
    xs = x[small]
    acc = np.zeros_like(xs)
    for c in coeff[:6][::-1]:
        acc = acc * xs + c
    out[small] = acc
    xl = x[~small]
    if kind == "phi":
        out[~small] = (1.0 - np.exp(-xl)) / xl
    elif kind == "psi":
        out[~small] = (xl / 2.0) / np.tanh(xl / 2.0)
    else:
        out[~small] = (2.0 / xl) * np.sinh(xl / 2.0)
    return out


def entire_matrix(kind, a):
    """Apply an entire function to a square matrix.

    Uses eigendecomposition when the eigenvector basis is usable (distinct
    eigenvalues, or repeated ones with a well conditioned eigenbasis) and a
    40-term power series otherwise.  The series branch is only reached near
    the origin, where it is unconditionally stable.
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eig(a)
    use_eig = True
    n = a.shape[0]
    if n > 1:
        sep = np.min(np.abs(w[:, None] - w[None, :])
                     + np.diag(np.full(n, np.inf)))
        if sep <= 1e-6:
            # Repeated spectrum: trust the eigenbasis only if well conditioned.
            use_eig = np.linalg.cond(v) < 1e8
    if use_eig:
        fa = (v * entire_scalar(kind, w)) @ np.linalg.inv(v)
        return fa.real
    coeff = _series_coefficients(kind)
    out = np.zeros_like(a)
    for c in coeff[::-1]:
        out = out @ a + c * np.eye(n)
    return out


# ----------------------------------------------------------------------
# Model base class
# ----------------------------------------------------------------------

class LieGroupModel:
    """A concrete matrix group with basis, structure constants and chart.

    Subclasses fix the basis matrices and override the vectorized chart
    operations with closed forms.  ``U`` arguments are coordinate arrays of
    shape (..., n); matrix stacks have shape (..., m, m).
    """

    name = ""
    unimodular = True

    def __init__(self, basis, domain_radius):
        self.basis = np.asarray(basis, dtype=complex)
        self.dim_algebra = self.basis.shape[0]
        self.matrix_size = self.basis.shape[1]
        self.domain_radius = domain_radius
        flat = np.concatenate(
            [self.basis.real.reshape(self.dim_algebra, -1),
             self.basis.imag.reshape(self.dim_algebra, -1)], axis=1)
        self._flat_pinv = np.linalg.pinv(flat.T)
        self.structure_constants = self._compute_structure_constants()
        self._validate()

    # -- coordinates ---------------------------------------------------
    def algebra_matrix(self, u):
        """Coordinates (..., n) -> matrices (..., m, m)."""
        u = np.asarray(u, dtype=float)
        return np.tensordot(u, self.basis, axes=(-1, 0))

    def algebra_coords(self, a):
        """Matrices (..., m, m) -> coordinates (..., n)."""
        a = np.asarray(a, dtype=complex)
        flat = np.concatenate(
            [a.real.reshape(a.shape[:-2] + (-1,)),
             a.imag.reshape(a.shape[:-2] + (-1,))], axis=-1)
        return flat @ self._flat_pinv.T

    def _compute_structure_constants(self):
        n = self.dim_algebra
        c = np.zeros((n, n, n))
        for i in range(n):
            for j in range(n):
                comm = self.basis[i] @ self.basis[j] - self.basis[j] @ self.basis[i]
                c[:, i, j] = self.algebra_coords(comm)
        return c

    def _validate(self):
        c = self.structure_constants
        n = self.dim_algebra
        if np.max(np.abs(c + np.swapaxes(c, 1, 2))) > 1e-12:
            raise ValueError(f"{self.name}: structure constants not antisymmetric")
        jac = (np.einsum('mij,lmk->lijk', c, c)
               + np.einsum('mjk,lmi->lijk', c, c)
               + np.einsum('mki,lmj->lijk', c, c))
        if np.max(np.abs(jac)) > 1e-12:
            raise ValueError(f"{self.name}: Jacobi identity violated")
        for i in range(n):
            for j in range(n):
                comm = self.basis[i] @ self.basis[j] - self.basis[j] @ self.basis[i]
                recon = np.tensordot(c[:, i, j], self.basis, axes=(0, 0))
                if np.max(np.abs(comm - recon)) > 1e-12:
                    raise ValueError(f"{self.name}: bracket not in basis span")
        if self.unimodular and np.max(np.abs(np.einsum('kjk->j', c))) > 1e-12:
            raise ValueError(f"{self.name}: unimodular flag inconsistent")

    # -- adjoint machinery ----------------------------------------------
    def ad_matrix(self, u):
        """Matrix of ad_X in basis coordinates for X = u^i X_i."""
        u = np.asarray(u, dtype=float)
        return np.einsum('kji,...j->...ki', self.structure_constants, u)

    def Ad_matrix(self, g):
        """Matrix of Ad_g (conjugation) in basis coordinates."""
        ginv = np.linalg.inv(g)
        cols = [self.algebra_coords(g @ b @ ginv) for b in self.basis]
        return np.stack(cols, axis=-1)

    def det_Ad(self, g):
        return float(np.linalg.det(self.Ad_matrix(g)).real)

    # -- chart operations (vectorized; subclasses override) --------------
    def exp_chart(self, u):
        raise NotImplementedError

    def log_chart(self, g):
        """Return (coords, ok) where ok flags elements inside the chart."""
        raise NotImplementedError

    def inside(self, u, guard=DOMAIN_GUARD):
        """Mask of coordinate vectors strictly inside the chart domain."""
        raise NotImplementedError

    def bch_chart(self, u, v):
        """Chart pullback of the group product; ok=False outside the chart."""
        gu = self.exp_chart(u)
        gv = self.exp_chart(v)
        return self.log_chart(gu @ gv)

    def jac_vals(self, u):
        """|det phi(ad_X)|: Haar density in exponential coordinates."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([abs(np.linalg.det(entire_matrix("phi", self.ad_matrix(x))))
                         for x in u])

    def F_vals(self, u):
        """sqrt|det lam(ad_X)|, the symmetric kernel weight."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([math.sqrt(abs(np.linalg.det(
            entire_matrix("lam", self.ad_matrix(x))))) for x in u])

    def psi_det_vals(self, u):
        """|det psi(ad_X)|, the quantizer weight before the chart cutoff."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([abs(np.linalg.det(entire_matrix("psi", self.ad_matrix(x))))
                         for x in u])

    def group_residual(self, g):
        """Distance from the defining matrix-group relations."""
        raise NotImplementedError

    def random_domain_coords(self, rng, count, margin=0.02):
        """Sample coordinate vectors inside the chart domain."""
        raise NotImplementedError

    # -- scalar API -------------------------------------------------------
    def exp_map(self, u):
        return self.exp_chart(np.asarray(u, dtype=float)[None, :])[0]

    def log_map(self, g):
        coords, ok = self.log_chart(np.asarray(g)[None, :, :])
        if not ok[0]:
            raise OutsideDomain(f"{self.name}: element outside the chart image")
        return coords[0]

    def bch(self, u, v):
        z, ok = self.bch_chart(np.asarray(u, dtype=float)[None, :],
                               np.asarray(v, dtype=float)[None, :])
        if not ok[0]:
            raise OutsideDomain(f"{self.name}: exp(X)exp(Y) outside the chart image")
        return z[0]

    def identity(self):
        dtype = float if np.max(np.abs(self.basis.imag)) == 0.0 else complex
        return np.eye(self.matrix_size, dtype=dtype)


# ----------------------------------------------------------------------
# R^n as affine translation matrices
# ----------------------------------------------------------------------

class RnModel(LieGroupModel):
    """(R^n, +) embedded as (n+1)x(n+1) unipotent translation matrices."""

    def __init__(self, n):
        self.name = f"rn:{n}"
        basis = np.zeros((n, n + 1, n + 1))
        for i in range(n):
            basis[i, i, n] = 1.0
        super().__init__(basis, domain_radius=np.inf)

    def exp_chart(self, u):
        u = np.asarray(u, dtype=float)
        n = self.dim_algebra
        out = np.broadcast_to(np.eye(n + 1), u.shape[:-1] + (n + 1, n + 1)).copy()
        out[..., :n, n] = u
        return out

    def log_chart(self, g):
        g = np.asarray(g)
        n = self.dim_algebra
        coords = g[..., :n, n].real.astype(float)
        ok = np.ones(g.shape[:-2], dtype=bool)
        return coords, ok

    def inside(self, u, guard=DOMAIN_GUARD):
        u = np.asarray(u, dtype=float)
        return np.all(np.isfinite(u), axis=-1)

    def bch_chart(self, u, v):
        z = np.asarray(u, dtype=float) + np.asarray(v, dtype=float)
        return z, np.ones(z.shape[:-1], dtype=bool)

    def jac_vals(self, u):
        u = np.atleast_2d(u)
        return np.ones(u.shape[0])

    def F_vals(self, u):
        u = np.atleast_2d(u)
        return np.ones(u.shape[0])

    def psi_det_vals(self, u):
        u = np.atleast_2d(u)
        return np.ones(u.shape[0])

    def group_residual(self, g):
        g = np.asarray(g)
        n = self.dim_algebra
        res = abs(np.max(np.abs(g[..., :n, :n] - np.eye(n))))
        res = max(res, float(np.max(np.abs(g[..., n, :n]))))
        res = max(res, float(np.max(np.abs(g[..., n, n] - 1.0))))
        return res

    def random_domain_coords(self, rng, count, margin=0.02, extent=4.0):
        return rng.uniform(-extent, extent, size=(count, self.dim_algebra))


# ----------------------------------------------------------------------
# SO(3)
# ----------------------------------------------------------------------

def _hat_so3(u):
    """Euler vectors (..., 3) -> skew matrices (..., 3, 3)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    out[..., 0, 1], out[..., 0, 2] = -z, y
    out[..., 1, 0], out[..., 1, 2] = z, -x
    out[..., 2, 0], out[..., 2, 1] = -y, x
    return out


def _sinc(t):
    """sin(t)/t with series near 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    out = np.empty_like(t)
    ts = t[small]
    out[small] = 1.0 - ts * ts / 6.0 * (1.0 - ts * ts / 20.0)
    out[~small] = np.sin(t[~small]) / t[~small]
    return out


def _cosc(t):
    """(1 - cos t)/t^2 with series near 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    out = np.empty_like(t)
    ts = t[small]
    out[small] = 0.5 - ts * ts / 24.0 * (1.0 - ts * ts / 30.0)
    out[~small] = (1.0 - np.cos(t[~small])) / t[~small] ** 2
    return out


class SO3Model(LieGroupModel):
    """Rotation group, Euler-vector chart of radius pi."""

    name = "so3"

    def __init__(self):
        e = np.zeros((3, 3, 3))
        e[0] = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]
        e[1] = [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
        e[2] = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]
        super().__init__(e, domain_radius=np.pi)

    def exp_chart(self, u):
        u = np.asarray(u, dtype=float)
        theta = np.linalg.norm(u, axis=-1)
        k = _hat_so3(u)
        eye = np.broadcast_to(np.eye(3), k.shape)
        return (eye + _sinc(theta)[..., None, None] * k
                + _cosc(theta)[..., None, None] * (k @ k))

    def log_chart(self, g):
        g = np.asarray(g)
        g = g.real if np.iscomplexobj(g) else g
        tr = np.trace(g, axis1=-2, axis2=-1)
        cos_t = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
        a = np.stack([g[..., 2, 1] - g[..., 1, 2],
                      g[..., 0, 2] - g[..., 2, 0],
                      g[..., 1, 0] - g[..., 0, 1]], axis=-1) / 2.0
        sin_t = np.linalg.norm(a, axis=-1)
        theta = np.arctan2(sin_t, cos_t)
        ok = theta < np.pi * (1.0 - DOMAIN_GUARD)

        # Generic branch: u = theta/sin(theta) * a, stable away from pi.
        coef = np.empty_like(theta)
        gen = theta < 2.9
        coef[gen] = 1.0 / np.maximum(_sinc(theta[gen]), 1e-300)
        coef[~gen] = 1.0
        coords = coef[..., None] * a

        # Near pi the axis comes from the symmetric part.
        near = (~gen) & ok
        if np.any(near):
            gn = g[near]
            ct = cos_t[near]
            b = (gn + np.swapaxes(gn, -1, -2)) / 2.0 - ct[:, None, None] * np.eye(3)
            nn = b / (1.0 - ct)[:, None, None]
            axis = np.sqrt(np.clip(np.diagonal(nn, axis1=-2, axis2=-1), 0.0, None))
            kmax = np.argmax(axis, axis=-1)
            rows = np.arange(axis.shape[0])
            sign = np.sign(nn[rows, kmax, :])
            sign[rows, kmax] = 1.0
            axis = axis * np.where(sign == 0.0, 1.0, sign)
            # Overall orientation from the antisymmetric part.
            flip = np.sum(axis * a[near], axis=-1) < 0.0
            axis[flip] *= -1.0
            coords[near] = theta[near][:, None] * axis
        return coords, ok

    def inside(self, u, guard=DOMAIN_GUARD):
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u, axis=-1) < np.pi * (1.0 - guard)

    def jac_vals(self, u):
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        return 2.0 * _cosc(theta)

    def F_vals(self, u):
        # det lam(ad_X) = (2 sin(theta/2)/theta)^2 from eigenvalues 0, +-i theta
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        return np.abs(_sinc(theta / 2.0))

    def psi_det_vals(self, u):
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        half = theta / 2.0
        small = np.abs(half) < 1e-6
        val = np.empty_like(half)
        val[small] = 1.0 - half[small] ** 2 / 3.0
        val[~small] = half[~small] / np.tan(half[~small])
        return val ** 2

    def group_residual(self, g):
        g = np.asarray(g)
        g = g.real if np.iscomplexobj(g) else g
        return max(float(np.max(np.abs(g.T @ g - np.eye(3)))),
                   abs(float(np.linalg.det(g)) - 1.0))

    def random_domain_coords(self, rng, count, margin=0.02):
        v = rng.normal(size=(count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = np.pi * (1.0 - margin) * rng.uniform(size=count) ** (1.0 / 3.0)
        return v * r[:, None]


# ----------------------------------------------------------------------
# SU(2)
# ----------------------------------------------------------------------

_SIGMA = np.array([[[0, 1], [1, 0]],
                   [[0, -1j], [1j, 0]],
                   [[1, 0], [0, -1]]], dtype=complex)


class SU2Model(LieGroupModel):
    """Special unitary group with basis X_j = -(i/2) sigma_j.

    In this basis [X_i, X_j] = eps_{ijk} X_k, mirroring the SO(3) structure
    constants; the chart is the ball of radius 2*pi.
    """

    name = "su2"

    def __init__(self):
        super().__init__(-0.5j * _SIGMA, domain_radius=2.0 * np.pi)

    def exp_chart(self, u):
        u = np.asarray(u, dtype=float)
        theta = np.linalg.norm(u, axis=-1)
        x = self.algebra_matrix(u)
        eye = np.broadcast_to(np.eye(2, dtype=complex), x.shape)
        # exp(X) = cos(theta/2) I + sinc(theta/2) X
        return (np.cos(theta / 2.0)[..., None, None] * eye
                + _sinc(theta / 2.0)[..., None, None] * x)

    def log_chart(self, g):
        g = np.asarray(g, dtype=complex)
        c = np.trace(g, axis1=-2, axis2=-1).real / 2.0
        t = g - c[..., None, None] * np.eye(2)
        s = np.linalg.norm(t, axis=(-2, -1)) / math.sqrt(2.0)
        half = np.arctan2(s, c)
        ok = half < np.pi * (1.0 - DOMAIN_GUARD)
        coef = np.empty_like(half)
        small = half < 1e-6
        coef[small] = 1.0 + half[small] ** 2 / 6.0
        coef[~small] = half[~small] / np.sin(half[~small])
        x = coef[..., None, None] * t
        m = 2j * x
        coords = np.stack([m[..., 0, 1].real,
                           -m[..., 0, 1].imag,
                           m[..., 0, 0].real], axis=-1)
        return coords, ok

    def inside(self, u, guard=DOMAIN_GUARD):
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u, axis=-1) < 2.0 * np.pi * (1.0 - guard)

    def jac_vals(self, u):
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        return 2.0 * _cosc(theta)

    def F_vals(self, u):
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        return np.abs(_sinc(theta / 2.0))

    def psi_det_vals(self, u):
        theta = np.linalg.norm(np.atleast_2d(u), axis=-1)
        half = theta / 2.0
        small = np.abs(half) < 1e-6
        val = np.empty_like(half)
        val[small] = 1.0 - half[small] ** 2 / 3.0
        val[~small] = half[~small] / np.tan(half[~small])
        return val ** 2

    def group_residual(self, g):
        g = np.asarray(g, dtype=complex)
        return max(float(np.max(np.abs(g.conj().T @ g - np.eye(2)))),
                   abs(complex(np.linalg.det(g)) - 1.0))

    def random_domain_coords(self, rng, count, margin=0.02):
        v = rng.normal(size=(count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = 2.0 * np.pi * (1.0 - margin) * rng.uniform(size=count) ** (1.0 / 3.0)
        return v * r[:, None]


# ----------------------------------------------------------------------
# SL(2,C) as a real six-dimensional Lie group
# ----------------------------------------------------------------------

class SL2CModel(LieGroupModel):
    """Traceless complex 2x2 matrices with real basis {X_j, i X_j}.

    Only the chart geometry (exp/log/domain/weight factors) is exposed;
    grids are not supported on the twelve-dimensional phase space.
    """

    name = "sl2c"

    def __init__(self):
        su2_basis = -0.5j * _SIGMA
        basis = np.concatenate([su2_basis, 1j * su2_basis], axis=0)
        super().__init__(basis, domain_radius=np.pi)

    @staticmethod
    def _eigenvalue(x):
        # X traceless 2x2: eigenvalues +-lambda with lambda^2 = -det X.
        det = x[..., 0, 0] * x[..., 1, 1] - x[..., 0, 1] * x[..., 1, 0]
        return np.sqrt(-det + 0j)

    def exp_chart(self, u):
        x = self.algebra_matrix(np.asarray(u, dtype=float))
        lam = self._eigenvalue(x)
        eye = np.broadcast_to(np.eye(2, dtype=complex), x.shape)
        small = np.abs(lam) < 1e-6
        sinhc = np.empty_like(lam)
        sinhc[small] = 1.0 + lam[small] ** 2 / 6.0
        sinhc[~small] = np.sinh(lam[~small]) / lam[~small]
        return np.cosh(lam)[..., None, None] * eye + sinhc[..., None, None] * x

    def log_chart(self, g):
        g = np.asarray(g, dtype=complex)
        z = np.trace(g, axis1=-2, axis2=-1) / 2.0
        # Excluded set: trace real and <= -2, i.e. z on (-inf, -1].
        bad = (np.abs(z.imag) <= DOMAIN_GUARD * (1.0 + np.abs(z))) \
            & (z.real <= -1.0 + DOMAIN_GUARD)
        w = np.sqrt(z * z - 1.0)
        lam = np.log(z + w)
        small = np.abs(w) < 1e-4
        f = np.empty_like(w)
        f[small] = 1.0 - w[small] ** 2 / 6.0 + 3.0 * w[small] ** 4 / 40.0
        f[~small] = lam[~small] / w[~small]
        x = f[..., None, None] * (g - z[..., None, None] * np.eye(2))
        coords = self.algebra_coords(x)
        im = np.abs(self._eigenvalue(x).imag)
        ok = (~bad) & (im < np.pi * (1.0 - DOMAIN_GUARD))
        return coords, ok

    def inside(self, u, guard=DOMAIN_GUARD):
        x = self.algebra_matrix(np.asarray(u, dtype=float))
        return np.abs(self._eigenvalue(x).imag) < np.pi * (1.0 - guard)

    def group_residual(self, g):
        g = np.asarray(g, dtype=complex)
        return abs(complex(np.linalg.det(g)) - 1.0)

    def random_domain_coords(self, rng, count, margin=0.02, extent=1.0):
        out = np.empty((count, 6))
        made = 0
        while made < count:
            cand = rng.uniform(-extent, extent, size=(2 * (count - made), 6))
            x = self.algebra_matrix(cand)
            im = np.abs(self._eigenvalue(x).imag)
            good = cand[im < np.pi * (1.0 - margin)]
            take = min(len(good), count - made)
            out[made:made + take] = good[:take]
            made += take
        return out


# ----------------------------------------------------------------------
# Factory and spec-level operations
# ----------------------------------------------------------------------

def make_model(name):
    """Build a model from its CLI name: rn:<n>, so3, su2 or sl2c."""
    name = name.strip().lower()
    if name.startswith("rn:"):
        n = int(name.split(":", 1)[1])
        if n < 1:
            raise ValueError("rn dimension must be positive")
        return RnModel(n)
    if name == "so3":
        return SO3Model()
    if name == "su2":
        return SU2Model()
    if name == "sl2c":
        return SL2CModel()
    raise ValueError(f"unknown model name: {name}")


def exp_map(model, u):
    return model.exp_map(u)


def log_map(model, g):
    return model.log_map(g)


def bch(model, u, v):
    return model.bch(u, v)


def adjoint_data(model, u, g):
    """(ad_X, Ad_g, det Ad_g) in basis coordinates."""
    ad = model.ad_matrix(u)
    Ad = model.Ad_matrix(g)
    return ad, Ad, float(np.linalg.det(Ad).real)


def entire_factor(model, kind, u):
    """phi/psi/lam applied to ad_X as an n x n matrix."""
    return entire_matrix(kind, model.ad_matrix(np.asarray(u, dtype=float)))


def F_factor(model, u):
    """sqrt|det lam(ad_X)|; symmetric under X -> -X."""
    return float(model.F_vals(np.asarray(u, dtype=float)[None, :])[0])


def L_factor(model, u, v):
    """F(X)F(Y)/F(X <> Y), or 0 when the product leaves the chart."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z, ok = model.bch_chart(u[None, :], v[None, :])
    if not ok[0]:
        return 0.0
    return float(model.F_vals(u[None, :])[0] * model.F_vals(v[None, :])[0]
                 / model.F_vals(z)[0])


def jacobian_exp(model, u):
    """|det phi(ad_X)|, the Haar density in the exponential chart."""
    return float(model.jac_vals(np.asarray(u, dtype=float)[None, :])[0])


def reflection(model, q, a):
    """s_q(a) = q a^{-1} q."""
    return q @ np.linalg.inv(a) @ q


def V_chart(model, q, a):
    """Chart coordinates of a seen from q: log(q^{-1} a)."""
    return model.log_map(np.linalg.inv(q) @ a)


def quantizer_weights(model, q, a):
    """(j, J): reflection weight and its Jacobian-corrected variant."""
    v = V_chart(model, q, a)
    if not bool(model.inside(2.0 * v[None, :])[0]):
        j = 0.0
    else:
        j = float(model.psi_det_vals(v[None, :])[0])
    det_ad = model.det_Ad(np.linalg.inv(q) @ a)
    return j, j * det_ad
