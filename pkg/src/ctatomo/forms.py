"""Discrete differential forms on the chart and product grids.

Scalars live at grid nodes, 1-form components at edge midpoints, 2-forms at
cell/face centers.  The exterior derivative is a pure forward-difference
stencil on this staggered complex, so d(d(.)) vanishes structurally.  The
codifferential is the adjoint of that stencil under metric quadrature
weights, which keeps the duality <d phi, A> = <phi, d* A> exact at the
discrete level and makes the Coulomb projection a plain symmetric Poisson
solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import InterpolationError, NumericError
from .manifold import MetricChart

GAUGE_SOLVE_RTOL = 1e-8


# ---------------------------------------------------------------------------
# interpolation on regular lattices

def interp2(values: np.ndarray, origin, spacing, pts: np.ndarray,
            extrap: str = "error") -> np.ndarray:
    """Bilinear interpolation on a regular 2-d lattice.

    Outside the lattice hull: ``extrap`` picks zeros (compactly supported
    fields), nearest-value clamping, or an error.
    """
    pts = np.asarray(pts, dtype=float)
    n, m = values.shape
    fx = (pts[..., 0] - origin[0]) / spacing[0]
    fy = (pts[..., 1] - origin[1]) / spacing[1]
    eps = 1e-9
    if extrap != "clamp":
        inside = (fx >= -eps) & (fx <= n - 1 + eps) & (fy >= -eps) & (fy <= m - 1 + eps)
        if extrap == "error" and not np.all(inside):
            raise InterpolationError("sample points fall outside the grid hull")
    fx = np.clip(fx, 0.0, n - 1)
    fy = np.clip(fy, 0.0, m - 1)
    i0 = np.minimum(fx.astype(int), n - 2)
    j0 = np.minimum(fy.astype(int), m - 2)
    tx = fx - i0
    ty = fy - j0
    v00 = values[i0, j0]
    v10 = values[i0 + 1, j0]
    v01 = values[i0, j0 + 1]
    v11 = values[i0 + 1, j0 + 1]
    out = (v00 * (1 - tx) * (1 - ty) + v10 * tx * (1 - ty)
           + v01 * (1 - tx) * ty + v11 * tx * ty)
    if extrap == "zero":
        out = np.where(inside, out, 0.0)
    return out


def interp1(values: np.ndarray, origin: float, spacing: float, xs: np.ndarray,
            extrap_zero: bool = False) -> np.ndarray:
    """Linear interpolation along one axis; ``values`` may carry extra axes last."""
    xs = np.asarray(xs, dtype=float)
    n = values.shape[0]
    f = (xs - origin) / spacing
    eps = 1e-9
    inside = (f >= -eps) & (f <= n - 1 + eps)
    if not extrap_zero and not np.all(inside):
        raise InterpolationError("sample points fall outside the grid hull")
    f = np.clip(f, 0.0, n - 1)
    i0 = np.minimum(f.astype(int), n - 2)
    t = f - i0
    t = t.reshape(t.shape + (1,) * (values.ndim - 1))
    out = values[i0] * (1 - t) + values[i0 + 1] * t
    if extrap_zero:
        mask = inside.reshape(inside.shape + (1,) * (values.ndim - 1))
        out = np.where(mask, out, 0.0)
    return out


# ---------------------------------------------------------------------------
# field containers

@dataclass
class ScalarField0:
    chart: MetricChart
    values: np.ndarray
    analytic: Callable | None = None

    @classmethod
    def sample(cls, chart: MetricChart, fn: Callable) -> "ScalarField0":
        vals = np.asarray(fn(chart.chart_nodes()), dtype=complex)
        return cls(chart, vals, analytic=fn)

    @classmethod
    def zeros(cls, chart: MetricChart) -> "ScalarField0":
        return cls(chart, np.zeros((chart.n2, chart.n3), dtype=complex))

    def copy(self) -> "ScalarField0":
        return ScalarField0(self.chart, self.values.copy(), self.analytic)

    def __add__(self, other: "ScalarField0") -> "ScalarField0":
        fn = None
        if self.analytic is not None and other.analytic is not None:
            fa, fb = self.analytic, other.analytic
            fn = lambda pts: fa(pts) + fb(pts)
        return ScalarField0(self.chart, self.values + other.values, fn)

    def __mul__(self, a) -> "ScalarField0":
        fn = None
        if self.analytic is not None and np.isscalar(a):
            f = self.analytic
            fn = lambda pts: a * f(pts)
        return ScalarField0(self.chart, a * self.values, fn)

    __rmul__ = __mul__


@dataclass
class OneForm0:
    chart: MetricChart
    c1: np.ndarray
    c2: np.ndarray
    analytic: tuple[Callable, Callable] | None = None

    @classmethod
    def sample(cls, chart: MetricChart, f1: Callable, f2: Callable) -> "OneForm0":
        e1, e2 = edge_lattices_2d(chart)
        p1 = lattice_points_2d(*e1)
        p2 = lattice_points_2d(*e2)
        return cls(chart, np.asarray(f1(p1), dtype=complex),
                   np.asarray(f2(p2), dtype=complex), analytic=(f1, f2))

    @classmethod
    def zeros(cls, chart: MetricChart) -> "OneForm0":
        return cls(chart, np.zeros((chart.n2 - 1, chart.n3), dtype=complex),
                   np.zeros((chart.n2, chart.n3 - 1), dtype=complex))

    def at_nodes(self) -> np.ndarray:
        """Components averaged to nodes: array (n2, n3, 2)."""
        return np.stack([_avg(self.c1, 0), _avg(self.c2, 1)], axis=-1)

    def __add__(self, other: "OneForm0") -> "OneForm0":
        fn = None
        if self.analytic is not None and other.analytic is not None:
            (a1, a2), (b1, b2) = self.analytic, other.analytic
            fn = (lambda pts: a1(pts) + b1(pts), lambda pts: a2(pts) + b2(pts))
        return OneForm0(self.chart, self.c1 + other.c1, self.c2 + other.c2, fn)

    def __sub__(self, other: "OneForm0") -> "OneForm0":
        fn = None
        if self.analytic is not None and other.analytic is not None:
            (a1, a2), (b1, b2) = self.analytic, other.analytic
            fn = (lambda pts: a1(pts) - b1(pts), lambda pts: a2(pts) - b2(pts))
        return OneForm0(self.chart, self.c1 - other.c1, self.c2 - other.c2, fn)

    def __mul__(self, a) -> "OneForm0":
        fn = None
        if self.analytic is not None and np.isscalar(a):
            f1, f2 = self.analytic
            fn = (lambda pts: a * f1(pts), lambda pts: a * f2(pts))
        return OneForm0(self.chart, a * self.c1, a * self.c2, fn)

    __rmul__ = __mul__


@dataclass
class TwoForm0:
    chart: MetricChart
    values: np.ndarray


@dataclass
class ScalarField3:
    chart: MetricChart
    values: np.ndarray
    analytic: Callable | None = None

    @classmethod
    def sample(cls, chart: MetricChart, fn: Callable) -> "ScalarField3":
        x1 = chart.x1_axis[:, None, None]
        pts = chart.chart_nodes()[None, ...]
        vals = np.asarray(fn(x1, pts), dtype=complex)
        vals = np.broadcast_to(vals, (chart.n1, chart.n2, chart.n3)).copy()
        return cls(chart, vals, analytic=fn)

    @classmethod
    def zeros(cls, chart: MetricChart) -> "ScalarField3":
        return cls(chart, np.zeros((chart.n1, chart.n2, chart.n3), dtype=complex))


@dataclass
class OneForm3:
    chart: MetricChart
    c1: np.ndarray   # (n1-1, n2, n3) axial component at x1 midpoints
    c2: np.ndarray   # (n1, n2-1, n3)
    c3: np.ndarray   # (n1, n2, n3-1)
    analytic: tuple[Callable, Callable, Callable] | None = None

    @classmethod
    def sample(cls, chart: MetricChart, f1: Callable, f2: Callable,
               f3: Callable) -> "OneForm3":
        x1m = x1_midpoints(chart)[:, None, None]
        x1n = chart.x1_axis[:, None, None]
        nodes = chart.chart_nodes()
        e1, e2 = edge_lattices_2d(chart)
        p1 = lattice_points_2d(*e1)
        p2 = lattice_points_2d(*e2)
        c1 = np.asarray(f1(x1m, nodes[None, ...]), dtype=complex)
        c2 = np.asarray(f2(x1n, p1[None, ...]), dtype=complex)
        c3 = np.asarray(f3(x1n, p2[None, ...]), dtype=complex)
        c1 = np.broadcast_to(c1, (chart.n1 - 1, chart.n2, chart.n3)).copy()
        c2 = np.broadcast_to(c2, (chart.n1, chart.n2 - 1, chart.n3)).copy()
        c3 = np.broadcast_to(c3, (chart.n1, chart.n2, chart.n3 - 1)).copy()
        return cls(chart, c1, c2, c3, analytic=(f1, f2, f3))

    @classmethod
    def zeros(cls, chart: MetricChart) -> "OneForm3":
        n1, n2, n3 = chart.n1, chart.n2, chart.n3
        return cls(chart, np.zeros((n1 - 1, n2, n3), dtype=complex),
                   np.zeros((n1, n2 - 1, n3), dtype=complex),
                   np.zeros((n1, n2, n3 - 1), dtype=complex))

    def at_nodes(self) -> np.ndarray:
        return np.stack([_avg(self.c1, 0), _avg(self.c2, 1), _avg(self.c3, 2)], axis=-1)

    def __add__(self, other: "OneForm3") -> "OneForm3":
        return OneForm3(self.chart, self.c1 + other.c1, self.c2 + other.c2,
                        self.c3 + other.c3)

    def __sub__(self, other: "OneForm3") -> "OneForm3":
        return OneForm3(self.chart, self.c1 - other.c1, self.c2 - other.c2,
                        self.c3 - other.c3)

    def __mul__(self, a) -> "OneForm3":
        return OneForm3(self.chart, a * self.c1, a * self.c2, a * self.c3)

    __rmul__ = __mul__


@dataclass
class TwoForm3:
    chart: MetricChart
    c12: np.ndarray
    c13: np.ndarray
    c23: np.ndarray

    def component_norms(self) -> tuple[float, float, float]:
        return (float(np.linalg.norm(self.c12)), float(np.linalg.norm(self.c13)),
                float(np.linalg.norm(self.c23)))

    def __sub__(self, other: "TwoForm3") -> "TwoForm3":
        return TwoForm3(self.chart, self.c12 - other.c12, self.c13 - other.c13,
                        self.c23 - other.c23)


# ---------------------------------------------------------------------------
# lattice bookkeeping

def x1_midpoints(chart: MetricChart) -> np.ndarray:
    x = chart.x1_axis
    return 0.5 * (x[:-1] + x[1:])


def node_lattice_2d(chart: MetricChart):
    x0, _, y0, _ = chart.domain.bbox
    h2, h3 = chart.chart_spacing
    return (x0, y0), (h2, h3), (chart.n2, chart.n3)


def edge_lattices_2d(chart: MetricChart):
    x0, _, y0, _ = chart.domain.bbox
    h2, h3 = chart.chart_spacing
    lat1 = ((x0 + h2 / 2.0, y0), (h2, h3), (chart.n2 - 1, chart.n3))
    lat2 = ((x0, y0 + h3 / 2.0), (h2, h3), (chart.n2, chart.n3 - 1))
    return lat1, lat2


def cell_lattice_2d(chart: MetricChart):
    x0, _, y0, _ = chart.domain.bbox
    h2, h3 = chart.chart_spacing
    return (x0 + h2 / 2.0, y0 + h3 / 2.0), (h2, h3), (chart.n2 - 1, chart.n3 - 1)


def lattice_points_2d(origin, spacing, shape) -> np.ndarray:
    xs = origin[0] + spacing[0] * np.arange(shape[0])
    ys = origin[1] + spacing[1] * np.arange(shape[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx, gy], axis=-1)


# ---------------------------------------------------------------------------
# exterior derivative

def exterior_d(field):
    """Discrete exterior derivative; d(d(.)) cancels identically."""
    if isinstance(field, ScalarField0):
        h2, h3 = field.chart.chart_spacing
        return OneForm0(field.chart,
                        np.diff(field.values, axis=0) / h2,
                        np.diff(field.values, axis=1) / h3)
    if isinstance(field, OneForm0):
        h2, h3 = field.chart.chart_spacing
        vals = (np.diff(field.c2, axis=0) / h2 - np.diff(field.c1, axis=1) / h3)
        return TwoForm0(field.chart, vals)
    if isinstance(field, ScalarField3):
        ch = field.chart
        h1 = ch.x1_spacing
        h2, h3 = ch.chart_spacing
        return OneForm3(ch,
                        np.diff(field.values, axis=0) / h1,
                        np.diff(field.values, axis=1) / h2,
                        np.diff(field.values, axis=2) / h3)
    if isinstance(field, OneForm3):
        ch = field.chart
        h1 = ch.x1_spacing
        h2, h3 = ch.chart_spacing
        c12 = np.diff(field.c2, axis=0) / h1 - np.diff(field.c1, axis=1) / h2
        c13 = np.diff(field.c3, axis=0) / h1 - np.diff(field.c1, axis=2) / h3
        c23 = np.diff(field.c3, axis=1) / h2 - np.diff(field.c2, axis=2) / h3
        return TwoForm3(ch, c12, c13, c23)
    raise TypeError(f"exterior_d undefined for {type(field).__name__}")


# ---------------------------------------------------------------------------
# metric quadrature machinery

def _trapezoid_axis(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


def node_weights_2d(chart: MetricChart) -> np.ndarray:
    h2, h3 = chart.chart_spacing
    return np.outer(_trapezoid_axis(chart.n2, h2), _trapezoid_axis(chart.n3, h3))


def node_weights_3d(chart: MetricChart) -> np.ndarray:
    h1 = chart.x1_spacing
    w1 = _trapezoid_axis(chart.n1, h1)
    return w1[:, None, None] * node_weights_2d(chart)[None, :, :]


def _avg(values: np.ndarray, axis: int) -> np.ndarray:
    """Edge-to-node averaging along one axis (copy rule at the two ends)."""
    n_e = values.shape[axis]
    out_shape = list(values.shape)
    out_shape[axis] = n_e + 1
    out = np.zeros(out_shape, dtype=values.dtype)
    sl = [slice(None)] * values.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    out[at(slice(1, -1))] = 0.5 * (values[at(slice(0, -1))] + values[at(slice(1, None))])
    out[at(0)] = values[at(0)]
    out[at(-1)] = values[at(-1)]
    return out


def _avg_t(values: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of ``_avg``: node field to edge field along one axis."""
    n = values.shape[axis]
    out_shape = list(values.shape)
    out_shape[axis] = n - 1
    out = np.zeros(out_shape, dtype=values.dtype)
    sl = [slice(None)] * values.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    out[at(slice(None))] = 0.5 * (values[at(slice(0, -1))] + values[at(slice(1, None))])
    out[at(0)] += 0.5 * values[at(0)]
    out[at(-1)] += 0.5 * values[at(-1)]
    return out


def _diff_t(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Transpose of the forward-difference stencil (edge field to nodes)."""
    n_e = values.shape[axis]
    out_shape = list(values.shape)
    out_shape[axis] = n_e + 1
    out = np.zeros(out_shape, dtype=values.dtype)
    sl = [slice(None)] * values.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    out[at(slice(0, -1))] -= values / h
    out[at(slice(1, None))] += values / h
    return out


def _metric_nodes_2d(chart: MetricChart):
    nodes = chart.chart_nodes()
    ginv = chart.g0_inv(nodes)
    sq = chart.sqrt_det_g0(nodes)
    return ginv, sq


def _metric_nodes_3d(chart: MetricChart):
    nodes = chart.chart_nodes()
    ginv0 = chart.g0_inv(nodes)
    sq0 = chart.sqrt_det_g0(nodes)
    x1 = chart.x1_axis[:, None, None]
    c = chart.conformal_factor(x1, nodes[None, ...])
    c = np.broadcast_to(c, (chart.n1, chart.n2, chart.n3)).copy()
    ginv = np.zeros((chart.n1, chart.n2, chart.n3, 3, 3))
    ginv[..., 0, 0] = 1.0 / c
    ginv[..., 1:, 1:] = ginv0[None, :, :, :, :] / c[..., None, None]
    sq = c ** 1.5 * sq0[None, :, :]
    return ginv, sq


def _apply_m1_2d(chart: MetricChart, c1: np.ndarray, c2: np.ndarray):
    ginv, sq = _metric_nodes_2d(chart)
    w = node_weights_2d(chart) * sq
    n = np.stack([_avg(c1, 0), _avg(c2, 1)], axis=-1)
    b = w[..., None] * np.einsum("...ij,...j->...i", ginv, n)
    return _avg_t(b[..., 0], 0), _avg_t(b[..., 1], 1)


def _apply_m1_3d(chart: MetricChart, c1: np.ndarray, c2: np.ndarray, c3: np.ndarray):
    ginv, sq = _metric_nodes_3d(chart)
    w = node_weights_3d(chart) * sq
    n = np.stack([_avg(c1, 0), _avg(c2, 1), _avg(c3, 2)], axis=-1)
    b = w[..., None] * np.einsum("...ij,...j->...i", ginv, n)
    return _avg_t(b[..., 0], 0), _avg_t(b[..., 1], 1), _avg_t(b[..., 2], 2)


def codifferential(A, chart: MetricChart | None = None):
    """Adjoint of the discrete exterior derivative under metric quadrature.

    The output lives on interior nodes (boundary ring zero); with that
    convention <d phi, A>_g = <phi, d* A> holds exactly for every phi that
    vanishes on the boundary, and the interior values are consistent with
    -|g|^{-1/2} d_i(|g|^{1/2} g^{ij} A_j) at second order.  Boundary rows of
    the raw adjoint would carry the surface flux of A, which belongs to the
    Neumann pairing, not to the codifferential.
    """
    chart = chart or A.chart
    if isinstance(A, OneForm0):
        h2, h3 = chart.chart_spacing
        m1, m2 = _apply_m1_2d(chart, A.c1, A.c2)
        _, sq = _metric_nodes_2d(chart)
        w = node_weights_2d(chart) * sq
        vals = (_diff_t(m1, 0, h2) + _diff_t(m2, 1, h3)) / w
        out = np.zeros_like(vals)
        out[1:-1, 1:-1] = vals[1:-1, 1:-1]
        return ScalarField0(chart, out)
    if isinstance(A, OneForm3):
        h1 = chart.x1_spacing
        h2, h3 = chart.chart_spacing
        m1, m2, m3 = _apply_m1_3d(chart, A.c1, A.c2, A.c3)
        _, sq = _metric_nodes_3d(chart)
        w = node_weights_3d(chart) * sq
        vals = (_diff_t(m1, 0, h1) + _diff_t(m2, 1, h2) + _diff_t(m3, 2, h3)) / w
        out = np.zeros_like(vals)
        out[1:-1, 1:-1, 1:-1] = vals[1:-1, 1:-1, 1:-1]
        return ScalarField3(chart, out)
    raise TypeError(f"codifferential undefined for {type(A).__name__}")


# ---------------------------------------------------------------------------
# inner products and norms

def inner_scalar(u, v) -> complex:
    chart = u.chart
    if u.values.ndim == 2:
        _, sq = _metric_nodes_2d(chart)
        w = node_weights_2d(chart) * sq
    else:
        _, sq = _metric_nodes_3d(chart)
        w = node_weights_3d(chart) * sq
    return complex(np.sum(w * u.values * np.conj(v.values)))


def inner_oneform(A, B) -> complex:
    chart = A.chart
    if isinstance(A, OneForm0):
        ginv, sq = _metric_nodes_2d(chart)
        w = node_weights_2d(chart) * sq
    else:
        ginv, sq = _metric_nodes_3d(chart)
        w = node_weights_3d(chart) * sq
    na = A.at_nodes()
    nb = B.at_nodes()
    return complex(np.sum(w * np.einsum("...ij,...i,...j->...", ginv, na, np.conj(nb))))


def norm_scalar(u) -> float:
    return float(np.sqrt(abs(inner_scalar(u, u))))


def norm_oneform(A) -> float:
    return float(np.sqrt(abs(inner_oneform(A, A))))


def domain_node_mask(chart: MetricChart) -> np.ndarray:
    """Chart nodes lying in the closed domain (disk nodes vs padding corners)."""
    return chart.domain.boundary_defect(chart.chart_nodes()) <= 1e-12


def norm_scalar_domain(u) -> float:
    """Quadrature norm restricted to nodes of the chart domain."""
    chart = u.chart
    mask = domain_node_mask(chart)
    _, sq = _metric_nodes_2d(chart)
    w = node_weights_2d(chart) * sq
    if u.values.ndim == 3:
        w = (_trapezoid_axis(chart.n1, chart.x1_spacing)[:, None, None]
             * (w * _metric_conformal_weight(chart))[None])
        return float(np.sqrt(np.sum((w * np.abs(u.values) ** 2)[:, mask])))
    return float(np.sqrt(np.sum((w * np.abs(u.values) ** 2)[mask])))


def _metric_conformal_weight(chart: MetricChart) -> np.ndarray:
    return np.ones((chart.n2, chart.n3))


def norm_oneform_domain(A) -> float:
    chart = A.chart
    mask = domain_node_mask(chart)
    if isinstance(A, OneForm0):
        ginv, sq = _metric_nodes_2d(chart)
        w = node_weights_2d(chart) * sq
        na = A.at_nodes()
        dens = w * np.einsum("...ij,...i,...j->...", ginv, na, np.conj(na)).real
        return float(np.sqrt(np.sum(dens[mask])))
    ginv, sq = _metric_nodes_3d(chart)
    w = node_weights_3d(chart) * sq
    na = A.at_nodes()
    dens = w * np.einsum("...ij,...i,...j->...", ginv, na, np.conj(na)).real
    return float(np.sqrt(np.sum(dens[:, mask])))


def metric_pairing(A, B, chart: MetricChart | None = None):
    """Pointwise pairing g^{ij} A_i conj(B_j) on grid nodes."""
    chart = chart or A.chart
    if isinstance(A, OneForm0):
        ginv, _ = _metric_nodes_2d(chart)
        vals = np.einsum("...ij,...i,...j->...", ginv, A.at_nodes(), np.conj(B.at_nodes()))
        return ScalarField0(chart, vals)
    if isinstance(A, OneForm3):
        ginv, _ = _metric_nodes_3d(chart)
        vals = np.einsum("...ij,...i,...j->...", ginv, A.at_nodes(), np.conj(B.at_nodes()))
        return ScalarField3(chart, vals)
    raise TypeError(f"metric_pairing undefined for {type(A).__name__}")


# ---------------------------------------------------------------------------
# gauge fixing

def _interior_mask(shape: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[(slice(1, -1),) * len(shape)] = True
    return mask


def solve_gauge(A, chart: MetricChart | None = None):
    """Dirichlet potential p with Laplace(p) = d* A and p = 0 on the boundary.

    Solved by conjugate gradients on the symmetric positive-definite system
    assembled from the adjoint machinery; relative residual at most 1e-8.
    Adding d(p) to A yields a representative with vanishing codifferential.
    """
    chart = chart or A.chart
    if isinstance(A, OneForm0):
        dim = 2
        shape = (chart.n2, chart.n3)
        spacings = chart.chart_spacing
        comps = (A.c1, A.c2)
        apply_m1 = lambda cs: _apply_m1_2d(chart, *cs)
    elif isinstance(A, OneForm3):
        dim = 3
        shape = (chart.n1, chart.n2, chart.n3)
        spacings = (chart.x1_spacing,) + chart.chart_spacing
        comps = (A.c1, A.c2, A.c3)
        apply_m1 = lambda cs: _apply_m1_3d(chart, *cs)
    else:
        raise TypeError(f"solve_gauge undefined for {type(A).__name__}")

    def d0t_m1(cs):
        ms = apply_m1(cs)
        out = np.zeros(shape, dtype=complex)
        for axis, (m, h) in enumerate(zip(ms, spacings)):
            out += _diff_t(m, axis, h)
        return out

    def d0(p):
        return tuple(np.diff(p, axis=axis) / h for axis, h in enumerate(spacings))

    mask = _interior_mask(shape)
    n_unknowns = int(mask.sum())

    rhs_full = -d0t_m1(comps)
    rhs = rhs_full[mask]

    def matvec(x):
        p = np.zeros(shape, dtype=complex)
        p[mask] = x
        return d0t_m1(d0(p))[mask]

    op = LinearOperator((n_unknowns, n_unknowns), matvec=matvec, dtype=complex)
    maxiter = max(200, int(10 * np.sqrt(n_unknowns)))
    x, info = cg(op, rhs, rtol=1e-12, atol=0.0, maxiter=maxiter)
    rhs_norm = np.linalg.norm(rhs)
    res = np.linalg.norm(matvec(x) - rhs) / rhs_norm if rhs_norm > 0 else 0.0
    if info != 0 and res > GAUGE_SOLVE_RTOL:
        raise NumericError(
            f"gauge solve did not converge (relative residual {res:.3e})",
            residual=res, iterations=maxiter)

    p = np.zeros(shape, dtype=complex)
    p[mask] = x
    if dim == 2:
        return ScalarField0(chart, p)
    return ScalarField3(chart, p)


def coulomb_project(A, chart: MetricChart | None = None):
    """Representative of the gauge class of A with vanishing codifferential.

    The exterior derivative of the output equals that of the input up to
    floating-point roundoff, independent of the solver residual.
    """
    chart = chart or A.chart
    p = solve_gauge(A, chart)
    return A + exterior_d(p)
