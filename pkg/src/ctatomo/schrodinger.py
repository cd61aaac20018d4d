"""Finite-difference magnetic Schrodinger operator on the product box.

The operator splits into four individually testable terms: the metric
Laplacian in conservative flux form, the codifferential coupling i d*(A u),
the advective pairing -i <A, du>, and the zeroth-order part (<A, A> + q) u,
with the bilinear metric pairing of the complex potentials.  Dirichlet
solves factorize the interior block with sparse LU; the assembled system is
Hermitian whenever the potentials are real and the transversal metric is
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericError
from .forms import OneForm3, ScalarField3
from .manifold import MetricChart


@dataclass
class ProductGrid:
    """Box [-a, a] x chart bounding box with boundary classification."""

    chart: MetricChart

    @property
    def shape(self) -> tuple[int, int, int]:
        ch = self.chart
        return (ch.n1, ch.n2, ch.n3)

    @property
    def spacings(self) -> tuple[float, float, float]:
        ch = self.chart
        h2, h3 = ch.chart_spacing
        return (ch.x1_spacing, h2, h3)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs, ys = self.chart.chart_axes
        return (self.chart.x1_axis, xs, ys)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        return m

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask()

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a1, a2, a3 = self.axes
        return np.meshgrid(a1, a2, a3, indexing="ij")


@dataclass
class CauchyData:
    """Dirichlet and magnetic Neumann traces on every boundary node."""

    dirichlet: np.ndarray
    magnetic_neumann: np.ndarray
    boundary_mask: np.ndarray

    def as_pairs(self):
        idx = np.argwhere(self.boundary_mask)
        return idx, self.dirichlet[self.boundary_mask], self.magnetic_neumann[self.boundary_mask]


# ---------------------------------------------------------------------------
# metric data on the product box

def _metric_fields(grid: ProductGrid):
    """Inverse metric (3x3), sqrt(det), and conformal factor at nodes."""
    ch = grid.chart
    nodes = ch.chart_nodes()
    ginv0 = ch.g0_inv(nodes)
    sq0 = ch.sqrt_det_g0(nodes)
    x1 = ch.x1_axis[:, None, None]
    c = np.broadcast_to(ch.conformal_factor(x1, nodes[None]), grid.shape).copy()
    ginv = np.zeros(grid.shape + (3, 3))
    ginv[..., 0, 0] = 1.0 / c
    ginv[..., 1:, 1:] = ginv0[None] / c[..., None, None]
    sq = c**1.5 * sq0[None]
    return ginv, sq


def _halfpoint_coeff(grid: ProductGrid, axis: int) -> np.ndarray:
    """sqrt(det g) g^{aa} evaluated at midpoints along one axis."""
    ch = grid.chart
    a1, a2, a3 = grid.axes
    axes = [a1.copy(), a2.copy(), a3.copy()]
    axes[axis] = 0.5 * (axes[axis][:-1] + axes[axis][1:])
    X1, X2, X3 = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X2, X3], axis=-1)
    c = ch.conformal_factor(X1, pts)
    if axis == 0:
        gaa_inv = 1.0 / c
    else:
        ginv0 = ch.g0_inv(pts)
        gaa_inv = ginv0[..., axis - 1, axis - 1] / c
    sq = c**1.5 * ch.sqrt_det_g0(pts)
    return sq * gaa_inv


# ---------------------------------------------------------------------------
# sparse building blocks (cached per grid/chart pair)

def _diff_forward(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1) / h, np.ones(n - 1) / h], [0, 1],
                    shape=(n - 1, n)).tocsr()


def _diff_centered(n: int, h: float) -> sp.csr_matrix:
    """Centered differences with one-sided second-order end rows."""
    M = sp.lil_matrix((n, n))
    for k in range(1, n - 1):
        M[k, k - 1] = -0.5 / h
        M[k, k + 1] = 0.5 / h
    M[0, 0], M[0, 1], M[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    M[n - 1, n - 1], M[n - 1, n - 2], M[n - 1, n - 3] = 1.5 / h, -2.0 / h, 0.5 / h
    return M.tocsr()


def _kron3(m1, m2, m3) -> sp.csr_matrix:
    return sp.kron(sp.kron(m1, m2), m3).tocsr()


class _Structure:
    def __init__(self, grid: ProductGrid):
        n1, n2, n3 = grid.shape
        h1, h2, h3 = grid.spacings
        I1, I2, I3 = sp.identity(n1), sp.identity(n2), sp.identity(n3)
        self.E = [
            _kron3(_diff_forward(n1, h1), I2, I3),
            _kron3(I1, _diff_forward(n2, h2), I3),
            _kron3(I1, I2, _diff_forward(n3, h3)),
        ]
        self.C = [
            _kron3(_diff_centered(n1, h1), I2, I3),
            _kron3(I1, _diff_centered(n2, h2), I3),
            _kron3(I1, I2, _diff_centered(n3, h3)),
        ]
        ginv, sq = _metric_fields(grid)
        self.ginv = ginv
        self.sq = sq
        # conservative flux part of the metric Laplacian (diagonal metric terms)
        K = None
        for axis in range(3):
            w = _halfpoint_coeff(grid, axis).ravel()
            Ka = (self.E[axis].T @ sp.diags(w) @ self.E[axis]).tocsr()
            K = Ka if K is None else K + Ka
        # mixed transversal terms for non-diagonal chart metrics
        g12 = ginv[..., 1, 2]
        if np.max(np.abs(g12)) > 1e-14:
            coef = sp.diags((sq * g12).ravel())
            K = K - (self.C[1] @ coef @ self.C[2]).tocsr()
            K = K - (self.C[2] @ coef @ self.C[1]).tocsr()
        self.K = K.tocsr()


def _structure(grid: ProductGrid) -> _Structure:
    st = getattr(grid.chart, "_schrodinger_structure", None)
    if st is None or st.sq.shape != grid.shape:
        st = _Structure(grid)
        grid.chart._schrodinger_structure = st
    return st


def _nodal_potential(A, grid: ProductGrid) -> np.ndarray:
    """Covariant components of A at nodes, shape (n1, n2, n3, 3)."""
    if A is None:
        return np.zeros(grid.shape + (3,), dtype=complex)
    if isinstance(A, OneForm3):
        return A.at_nodes()
    if isinstance(A, tuple) and len(A) == 3:
        return np.stack([np.asarray(c, dtype=complex) for c in A], axis=-1)
    raise TypeError(f"unsupported potential type {type(A).__name__}")


def _nodal_scalar(q, grid: ProductGrid) -> np.ndarray:
    if q is None:
        return np.zeros(grid.shape, dtype=complex)
    if isinstance(q, ScalarField3):
        return q.values
    return np.asarray(q, dtype=complex)


def operator_terms(u: np.ndarray, A, q, grid: ProductGrid,
                   chart: MetricChart | None = None) -> dict[str, np.ndarray]:
    """The four operator terms evaluated at interior nodes (boundary zero)."""
    st = _structure(grid)
    u = np.asarray(u, dtype=complex)
    if u.shape != grid.shape:
        raise ConfigurationError("field shape must match the product grid")
    Av = _nodal_potential(A, grid)
    qv = _nodal_scalar(q, grid)
    sq = st.sq
    ginv = st.ginv
    uf = u.ravel()

    lap = (st.K @ uf).reshape(grid.shape) / sq

    gA = np.einsum("...ij,...j->...i", ginv, Av)      # g^{jk} A_k
    flux = np.zeros(grid.shape, dtype=complex)
    for j in range(3):
        flux += (st.C[j] @ (sq * gA[..., j] * u).ravel()).reshape(grid.shape)
    dstar_term = -1j * flux / sq

    adv = np.zeros(grid.shape, dtype=complex)
    for j in range(3):
        adv += gA[..., j] * (st.C[j] @ uf).reshape(grid.shape)
    adv_term = -1j * adv

    pair_aa = np.einsum("...ij,...i,...j->...", ginv, Av, Av)
    zero_term = (pair_aa + qv) * u

    interior = grid.interior_mask()
    out = {}
    for name, vals in (("laplacian", lap), ("dstar", dstar_term),
                       ("advective", adv_term), ("zeroth", zero_term)):
        z = np.zeros(grid.shape, dtype=complex)
        z[interior] = vals[interior]
        out[name] = z
    return out


def apply_operator(u: np.ndarray, A, q, grid: ProductGrid,
                   chart: MetricChart | None = None) -> np.ndarray:
    """Second-order evaluation of the magnetic Schrodinger operator."""
    terms = operator_terms(u, A, q, grid, chart)
    return terms["laplacian"] + terms["dstar"] + terms["advective"] + terms["zeroth"]


# ---------------------------------------------------------------------------
# Dirichlet solves

def assemble_system(A, q, grid: ProductGrid) -> sp.csr_matrix:
    """Volume-weighted operator matrix over all nodes (weak scaling).

    Rows are meaningful at interior nodes; the scaling by sqrt(det g) keeps
    the interior block Hermitian for real potentials on diagonal metrics.
    """
    st = _structure(grid)
    Av = _nodal_potential(A, grid)
    qv = _nodal_scalar(q, grid)
    sq = st.sq.ravel()
    ginv = st.ginv
    gA = np.einsum("...ij,...j->...i", ginv, Av)
    M = st.K.astype(complex)
    for j in range(3):
        W = sp.diags((st.sq * gA[..., j]).ravel())
        M = M - 1j * (st.C[j] @ W) - 1j * (W @ st.C[j])
    pair_aa = np.einsum("...ij,...i,...j->...", ginv, Av, Av).ravel()
    M = M + sp.diags(sq * (pair_aa + qv.ravel()))
    return M.tocsr()


def solve_dirichlet(A, q, boundary_values: np.ndarray, grid: ProductGrid,
                    chart: MetricChart | None = None) -> np.ndarray:
    """Solve L u = 0 with prescribed Dirichlet data on the box boundary."""
    bv = np.asarray(boundary_values, dtype=complex)
    if bv.shape != grid.shape:
        raise ConfigurationError("boundary values must be given on the full grid")
    interior = grid.interior_mask().ravel()
    M = assemble_system(A, q, grid)
    M_ii = M[interior][:, interior].tocsc()
    M_ib = M[interior][:, ~interior].tocsc()
    u_b = bv.ravel()[~interior]
    rhs = -(M_ib @ u_b)
    try:
        lu = splu(M_ii)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise NumericError(
            "Dirichlet system is numerically singular; the operator sits near "
            f"an interior eigenvalue - consider shifting q by a constant ({exc})")
    rhs_norm = np.linalg.norm(rhs)
    res = np.linalg.norm(M_ii @ x - rhs) / rhs_norm if rhs_norm > 0 else 0.0
    if res > 1e-8:
        raise NumericError(
            "Dirichlet solve exceeded the residual tolerance; the operator may "
            "be near an interior eigenvalue - consider shifting q by a constant",
            residual=float(res))
    scale = np.max(np.abs(u_b)) if np.any(u_b) else 1.0
    if np.max(np.abs(x)) > 1e10 * max(scale, 1e-300):
        raise NumericError(
            "Dirichlet solution blows up; the operator is near an interior "
            "eigenvalue - consider shifting q by a constant")
    u = bv.copy().ravel()
    u[interior] = x
    return u.reshape(grid.shape)


# ---------------------------------------------------------------------------
# boundary traces

def magnetic_neumann(u: np.ndarray, A, grid: ProductGrid,
                     chart: MetricChart | None = None) -> np.ndarray:
    """Magnetic Neumann trace d_nu u + i <A, nu> u on boundary nodes.

    One-sided second-order normal differences; at box edges and corners the
    face with the smallest axis index wins.
    """
    u = np.asarray(u, dtype=complex)
    st = _structure(grid)
    ginv = st.ginv
    Av = _nodal_potential(A, grid)
    h = grid.spacings
    out = np.zeros(grid.shape, dtype=complex)
    assigned = np.zeros(grid.shape, dtype=bool)

    du = np.stack([(st.C[j] @ u.ravel()).reshape(grid.shape) for j in range(3)],
                  axis=-1)

    for axis in range(3):
        for side in (0, -1):
            face = [slice(None)] * 3
            face[axis] = side
            face = tuple(face)
            sgn = -1.0 if side == 0 else 1.0

            # replace the normal component of the gradient by the one-sided stencil
            sl1 = [slice(None)] * 3
            sl2 = [slice(None)] * 3
            sl3 = [slice(None)] * 3
            if side == 0:
                sl1[axis], sl2[axis], sl3[axis] = 0, 1, 2
                dn = (-1.5 * u[tuple(sl1)] + 2.0 * u[tuple(sl2)]
                      - 0.5 * u[tuple(sl3)]) / h[axis]
            else:
                sl1[axis], sl2[axis], sl3[axis] = -1, -2, -3
                dn = (1.5 * u[tuple(sl1)] - 2.0 * u[tuple(sl2)]
                      + 0.5 * u[tuple(sl3)]) / h[axis]

            grad = du[face].copy()
            grad[..., axis] = dn

            gf = ginv[face]
            gff = gf[..., axis, axis]
            dnu = sgn * np.einsum("...j,...j->...", gf[..., axis, :], grad) / np.sqrt(gff)
            a_nu = sgn * np.einsum("...j,...j->...", gf[..., axis, :], Av[face]) / np.sqrt(gff)
            vals = dnu + 1j * a_nu * u[face]

            fresh = ~assigned[face]
            cur = out[face]
            cur[fresh] = vals[fresh]
            out[face] = cur
            assigned[face] = True

    return out


def cauchy_data(u: np.ndarray, A, grid: ProductGrid,
                chart: MetricChart | None = None) -> CauchyData:
    mask = grid.boundary_mask()
    tr = np.zeros(grid.shape, dtype=complex)
    tr[mask] = np.asarray(u, dtype=complex)[mask]
    return CauchyData(dirichlet=tr, magnetic_neumann=magnetic_neumann(u, A, grid),
                      boundary_mask=mask)


# ---------------------------------------------------------------------------
# gauge equivalence

def gauge_equiv_check(A, q, p: np.ndarray, boundary_values: np.ndarray,
                      grid: ProductGrid, chart: MetricChart | None = None) -> dict:
    """Numerical check that A and A + dp share Cauchy data when p|boundary = 0.

    Solves both problems with the same Dirichlet data, compares the gauged
    interior solutions and the magnetic Neumann traces, and reports the
    maximal discrepancies.
    """
    st = _structure(grid)
    p = np.asarray(p, dtype=complex)
    bmask = grid.boundary_mask()
    p_bdry = float(np.max(np.abs(p[bmask])))
    scale_p = float(np.max(np.abs(p))) if np.any(p) else 1.0
    if p_bdry > 1e-12 * scale_p:
        raise ConfigurationError("gauge potential must vanish on the boundary")

    dp = tuple((st.C[j] @ p.ravel()).reshape(grid.shape) for j in range(3))
    Av = _nodal_potential(A, grid)
    A2 = tuple(Av[..., j] + dp[j] for j in range(3))

    u1 = solve_dirichlet(A, q, boundary_values, grid, chart)
    u2 = solve_dirichlet(A2, q, boundary_values, grid, chart)

    gauged = np.exp(-1j * p) * u1
    denom = np.max(np.abs(u1))
    interior_err = float(np.max(np.abs(u2 - gauged)) / denom)

    t1 = magnetic_neumann(u1, A, grid)
    t2 = magnetic_neumann(u2, A2, grid)
    tn = np.max(np.abs(t1[bmask]))
    neumann_err = float(np.max(np.abs((t2 - t1)[bmask])) / tn)

    return {
        "interior_discrepancy": interior_err,
        "neumann_discrepancy": neumann_err,
        "dirichlet_scale": float(denom),
        "neumann_scale": float(tn),
    }
