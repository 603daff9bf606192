"""Uniform chart grids on G, the algebra domain and momentum space.

All grids are tensor products of uniform axes in chart coordinates.  Group
and algebra grids are clipped to the chart domain; clipped node sets keep a
link back to the underlying cube so sampled data can be interpolated
multilinearly (values outside the node set are treated as zero, consistent
with compactly supported data).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class UniformAxes:
    """Tensor-product axis description: first node, spacing and count per dim."""

    origin: np.ndarray          # (n,) coordinate of the first node per axis
    spacing: np.ndarray         # (n,) node spacing per axis
    counts: tuple               # nodes per axis

    @property
    def ndim(self):
        return len(self.counts)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def node_axes(self):
        return [self.origin[d] + self.spacing[d] * np.arange(self.counts[d])
                for d in range(self.ndim)]

    def tensor_nodes(self):
        mesh = np.meshgrid(*self.node_axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def centered_axes(extent, res):
    """Cell-centered symmetric axes over [-extent, extent]^n.

    The node set is closed under negation for every resolution; odd
    resolutions additionally contain the origin.
    """
    extent = np.broadcast_to(np.asarray(extent, dtype=float), (len(res),)) \
        if np.ndim(extent) else np.full(len(res), float(extent))
    res = tuple(int(r) for r in res)
    spacing = 2.0 * extent / np.array(res)
    origin = -extent + spacing / 2.0
    return UniformAxes(origin=origin, spacing=spacing, counts=res)


class CubeInterpolator:
    """Multilinear interpolation on a uniform tensor grid with zero fill.

    Evaluation at exact node coordinates reproduces node values to
    roundoff; points outside the hull (or touching zero-padded cells)
    decay linearly to zero.
    """

    def __init__(self, axes: UniformAxes, values: np.ndarray):
        shape = tuple(axes.counts)
        if values.shape != shape:
            raise ValueError(f"values shape {values.shape} != grid {shape}")
        self.axes = axes
        padded = np.zeros(tuple(c + 2 for c in shape), dtype=complex)
        padded[tuple(slice(1, 1 + c) for c in shape)] = values
        self._padded = padded

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.axes.ndim
        t = (points - self.axes.origin) / self.axes.spacing
        base = np.floor(t).astype(np.int64)
        frac = t - base
        counts = np.asarray(self.axes.counts)
        # Points further than one cell outside the hull contribute zero.
        valid = np.all((base >= -1) & (base <= counts - 1), axis=1)
        base_p = np.clip(base + 1, 0, counts)  # index into padded array
        out = np.zeros(points.shape[0], dtype=complex)
        if not np.any(valid):
            return out
        bp = base_p[valid]
        fr = frac[valid]
        acc = np.zeros(bp.shape[0], dtype=complex)
        for corner in range(1 << n):
            w = np.ones(bp.shape[0])
            idx = []
            for d in range(n):
                bit = (corner >> d) & 1
                w = w * (fr[:, d] if bit else (1.0 - fr[:, d]))
                idx.append(bp[:, d] + bit)
            acc += w * self._padded[tuple(idx)]
        out[valid] = acc
        return out

    def stencil(self, points, cube_to_flat):
        """Sparse interpolation stencils as (rows, cols, weights) triplets.

        ``cube_to_flat`` maps cube multi-indices to flat node indices (-1
        where the cube holds no node); weights attached to such cells drop,
        matching the zero-fill convention.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.axes.ndim
        t = (points - self.axes.origin) / self.axes.spacing
        base = np.floor(t).astype(np.int64)
        frac = t - base
        counts = np.asarray(self.axes.counts)
        rows_out, cols_out, w_out = [], [], []
        inside = np.all((base >= -1) & (base <= counts - 1), axis=1)
        for corner in range(1 << n):
            w = np.ones(points.shape[0])
            idx = np.empty((points.shape[0], n), dtype=np.int64)
            ok = inside.copy()
            for d in range(n):
                bit = (corner >> d) & 1
                w = w * (frac[:, d] if bit else (1.0 - frac[:, d]))
                idx[:, d] = base[:, d] + bit
                ok &= (idx[:, d] >= 0) & (idx[:, d] < counts[d])
            if not np.any(ok):
                continue
            flat = cube_to_flat[tuple(idx[ok].T)]
            keep = flat >= 0
            sel = np.where(ok)[0][keep]
            rows_out.append(sel)
            cols_out.append(flat[keep])
            w_out.append(w[ok][keep])
        if rows_out:
            return (np.concatenate(rows_out), np.concatenate(cols_out),
                    np.concatenate(w_out))
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                np.empty(0))


@dataclass
class AlgebraGrid:
    """Nodes covering the chart domain (or a plain box) in the Lie algebra."""

    model: object
    axes: UniformAxes
    nodes: np.ndarray            # (N, n) coordinates
    cube_to_flat: np.ndarray     # int array over the cube, -1 where clipped
    cell_volume: float

    @classmethod
    def build(cls, model, res, extent=None, clip_to_domain=True, guard=1e-9):
        n = model.dim_algebra
        if np.ndim(res) == 0:
            res = (int(res),) * n
        if extent is None:
            if not np.isfinite(model.domain_radius):
                raise ValueError(f"{model.name}: extent required for unbounded chart")
            extent = model.domain_radius
        axes = centered_axes(extent, res)
        all_nodes = axes.tensor_nodes()
        if clip_to_domain:
            mask = model.inside(all_nodes, guard=guard)
        else:
            mask = np.ones(all_nodes.shape[0], dtype=bool)
        cube_to_flat = np.full(axes.counts, -1, dtype=np.int64)
        flat_idx = np.where(mask)[0]
        cube_to_flat.ravel()[flat_idx] = np.arange(flat_idx.size)
        return cls(model=model, axes=axes, nodes=all_nodes[mask],
                   cube_to_flat=cube_to_flat, cell_volume=axes.cell_volume)

    @property
    def size(self):
        return self.nodes.shape[0]

    def scatter_to_cube(self, values):
        cube = np.zeros(self.axes.counts, dtype=complex)
        cube.ravel()[self.cube_to_flat.ravel() >= 0] = values
        return cube

    def interpolator(self, values):
        return CubeInterpolator(self.axes, self.scatter_to_cube(values))

    def negation_index(self):
        """Flat index permutation realizing X -> -X on the node set."""
        counts = np.asarray(self.axes.counts)
        t = (-self.nodes - self.axes.origin) / self.axes.spacing
        idx = np.rint(t).astype(np.int64)
        if np.max(np.abs(t - idx)) > 1e-9 or np.any(idx < 0) or np.any(idx >= counts):
            raise ValueError("node set is not closed under negation")
        flat = self.cube_to_flat[tuple(idx.T)]
        if np.any(flat < 0):
            raise ValueError("node set is not closed under negation")
        return flat

    def zero_index(self):
        """Flat index of the origin node, or -1 when 0 is not a node."""
        t = (np.zeros(self.axes.ndim) - self.axes.origin) / self.axes.spacing
        idx = np.rint(t).astype(np.int64)
        if np.max(np.abs(t - idx)) > 1e-9:
            return -1
        return int(self.cube_to_flat[tuple(idx)])


@dataclass
class GroupGrid:
    """Image of a uniform chart grid under exp with Haar weights."""

    model: object
    chart: AlgebraGrid
    elements: np.ndarray        # (N, m, m)
    elements_inv: np.ndarray    # (N, m, m)
    haar_weights: np.ndarray    # (N,)

    @classmethod
    def build(cls, model, res, extent=None, guard=1e-9):
        if model.name == "sl2c":
            raise ValueError("grids are not supported on sl2c")
        chart = AlgebraGrid.build(model, res, extent=extent, clip_to_domain=True,
                                  guard=guard)
        elements = model.exp_chart(chart.nodes)
        weights = model.jac_vals(chart.nodes) * chart.cell_volume
        return cls(model=model, chart=chart, elements=elements,
                   elements_inv=np.linalg.inv(elements), haar_weights=weights)

    @property
    def size(self):
        return self.chart.size

    @property
    def chart_nodes(self):
        return self.chart.nodes

    def interpolator(self, values):
        return self.chart.interpolator(values)

    def total_mass(self):
        return float(np.sum(self.haar_weights))

    def evaluate_at_elements(self, values, group_elements):
        """Interpolate node data at arbitrary group elements (zero off-chart)."""
        coords, ok = self.model.log_chart(group_elements)
        out = np.zeros(coords.shape[0], dtype=complex)
        if np.any(ok):
            out[ok] = self.interpolator(values)(coords[ok])
        return out

    def shift_stencil_matrix(self, targets):
        """Dense matrix S with (S v)_i = interp(v)(targets_i) for node data."""
        coords, ok = self.model.log_chart(targets)
        interp = self.interpolator(np.zeros(self.size))
        rows, cols, w = interp.stencil(coords, self.chart.cube_to_flat)
        s = np.zeros((targets.shape[0], self.size))
        keep = ok[rows]
        np.add.at(s, (rows[keep], cols[keep]), w[keep])
        return s


@dataclass
class MomentumGrid:
    """Uniform box in momentum space containing p = 0 as a node."""

    axes: UniformAxes
    nodes: np.ndarray
    cell_volume: float
    cutoff: float

    @classmethod
    def box(cls, n, res, cutoff):
        """res nodes per axis at spacing 2*cutoff/res, origin included."""
        if np.ndim(res) == 0:
            res = (int(res),) * n
        res = tuple(int(r) for r in res)
        cutoff = np.broadcast_to(np.asarray(cutoff, dtype=float), (n,)).copy()
        spacing = 2.0 * cutoff / np.array(res)
        origin = -spacing * np.array([r // 2 for r in res])
        axes = UniformAxes(origin=origin, spacing=spacing, counts=res)
        grid = cls(axes=axes, nodes=axes.tensor_nodes(),
                   cell_volume=axes.cell_volume, cutoff=float(np.max(cutoff)))
        if grid.zero_index() < 0:
            raise ValueError("momentum grid must contain p = 0")
        return grid

    @classmethod
    def dual_to(cls, algebra_grid, hbar, res=None):
        """Box satisfying the discrete duality res * dp * dX = 2*pi*|hbar|.

        With res at least the algebra resolution the hbar-scaled transform
        pair is alias-free, making tilde->phase->tilde exact on node data.
        """
        ax = algebra_grid.axes
        if res is None:
            res = max(ax.counts)
        if np.ndim(res) == 0:
            res = (int(res),) * ax.ndim
        spacing = 2.0 * np.pi * abs(hbar) / (np.array(res) * ax.spacing)
        origin = -spacing * np.array([r // 2 for r in res])
        axes = UniformAxes(origin=origin, spacing=spacing, counts=tuple(res))
        cutoff = float(np.max(spacing * np.array([r // 2 for r in res])))
        return cls(axes=axes, nodes=axes.tensor_nodes(),
                   cell_volume=axes.cell_volume, cutoff=cutoff)

    @property
    def size(self):
        return self.nodes.shape[0]

    def zero_index(self):
        t = -self.axes.origin / self.axes.spacing
        idx = np.rint(t).astype(np.int64)
        if np.max(np.abs(t - idx)) > 1e-9:
            return -1
        counts = np.asarray(self.axes.counts)
        if np.any(idx < 0) or np.any(idx >= counts):
            return -1
        flat = np.ravel_multi_index(tuple(idx), self.axes.counts)
        return int(flat)


def check_same_grid(a, b, what="grids"):
    if a is not b:
        raise GridMismatch(f"{what} must be the identical grid object")


def check_same_hbar(h1, h2):
    if h1 != h2:
        raise GridMismatch(f"hbar mismatch: {h1} vs {h2}")
