"""Transversal chart geometry and unit-speed geodesic tracing.

The transversal surface is represented in a single planar chart (disk or
square) carrying a symmetric positive-definite 2x2 metric field.  Geodesics
are integrated with a classical fourth-order one-step method in arc length;
the boundary exit is located by bisection on the crossing bracket.  Tracing
is vectorized over whole ray families, which is what makes dense ray sets
cheap enough for desk-scale tomography.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ChartDomainError, ConfigurationError, TrappedRayError

DEFAULT_EPS_TAN = 1e-3
DEFAULT_EPS_EXIT = 1e-8
DEFAULT_EPS_SPEED = 1e-6
TRAP_CAP_FACTOR = 50.0


# ---------------------------------------------------------------------------
# chart domains

@dataclass(frozen=True)
class DiskDomain:
    """Disk of given radius centered at the origin of the chart."""

    radius: float = 1.0

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        r = self.radius
        return (-r, r, -r, r)

    def boundary_defect(self, pts: np.ndarray) -> np.ndarray:
        """Signed defect: negative inside, zero on the boundary."""
        return np.hypot(pts[..., 0], pts[..., 1]) - self.radius

    def outward_normal(self, pts: np.ndarray) -> np.ndarray:
        r = np.hypot(pts[..., 0], pts[..., 1])
        r = np.where(r == 0.0, 1.0, r)
        return pts / r[..., None]

    def boundary_point(self, s: np.ndarray) -> np.ndarray:
        ang = 2.0 * np.pi * np.asarray(s)
        return np.stack([self.radius * np.cos(ang), self.radius * np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class SquareDomain:
    """Axis-aligned square of given side centered at the origin."""

    side: float = 2.0

    @property
    def diameter(self) -> float:
        return self.side * np.sqrt(2.0)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        h = self.side / 2.0
        return (-h, h, -h, h)

    def boundary_defect(self, pts: np.ndarray) -> np.ndarray:
        return np.maximum(np.abs(pts[..., 0]), np.abs(pts[..., 1])) - self.side / 2.0

    def outward_normal(self, pts: np.ndarray) -> np.ndarray:
        ax = np.abs(pts[..., 0])
        ay = np.abs(pts[..., 1])
        nx = np.where(ax >= ay, np.sign(pts[..., 0]), 0.0)
        ny = np.where(ax >= ay, 0.0, np.sign(pts[..., 1]))
        return np.stack([nx, ny], axis=-1)

    def boundary_point(self, s: np.ndarray) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=float), 1.0)
        h = self.side / 2.0
        p = s * 4.0
        side_idx = np.floor(p).astype(int)
        frac = p - side_idx
        u = (frac * 2.0 - 1.0) * h
        x = np.select([side_idx == 0, side_idx == 1, side_idx == 2, side_idx == 3],
                      [u, np.full_like(u, h), -u, np.full_like(u, -h)])
        y = np.select([side_idx == 0, side_idx == 1, side_idx == 2, side_idx == 3],
                      [np.full_like(u, -h), u, np.full_like(u, h), -u])
        return np.stack([x, y], axis=-1)


Domain = DiskDomain | SquareDomain


# ---------------------------------------------------------------------------
# metric chart

def _euclidean_metric(pts: np.ndarray) -> np.ndarray:
    out = np.zeros(pts.shape[:-1] + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    return out


@dataclass
class MetricChart:
    """Planar chart of the transversal surface plus the conformal factor.

    ``metric`` maps points ``(..., 2)`` to SPD matrices ``(..., 2, 2)``;
    ``conformal`` maps ``(x1, pts)`` to a positive scalar field on the
    product of the axial interval with the chart.  ``n1`` counts axial
    samples on ``[-x1_half, x1_half]``; the chart grid is ``n2 x n3`` nodes
    over the domain bounding box.
    """

    domain: Domain
    n1: int = 33
    n2: int = 32
    n3: int = 32
    x1_half: float = 1.0
    metric: Callable[[np.ndarray], np.ndarray] = _euclidean_metric
    conformal: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    metric_is_constant: bool = True
    fd_step: float | None = None

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2 or self.n3 < 2:
            raise ConfigurationError("grid resolutions must be at least 2 per axis")
        if self.x1_half <= 0:
            raise ConfigurationError("x1_half must be positive")

    # --- grids ------------------------------------------------------------

    @property
    def x1_axis(self) -> np.ndarray:
        return np.linspace(-self.x1_half, self.x1_half, self.n1)

    @property
    def chart_axes(self) -> tuple[np.ndarray, np.ndarray]:
        x0, x1, y0, y1 = self.domain.bbox
        return np.linspace(x0, x1, self.n2), np.linspace(y0, y1, self.n3)

    @property
    def chart_spacing(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.domain.bbox
        return (x1 - x0) / (self.n2 - 1), (y1 - y0) / (self.n3 - 1)

    @property
    def x1_spacing(self) -> float:
        return 2.0 * self.x1_half / (self.n1 - 1)

    def chart_nodes(self) -> np.ndarray:
        xs, ys = self.chart_axes
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    # --- metric evaluation --------------------------------------------------

    def g0(self, pts: np.ndarray) -> np.ndarray:
        return self.metric(np.asarray(pts, dtype=float))

    def g0_inv(self, pts: np.ndarray) -> np.ndarray:
        g = self.g0(pts)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        inv = np.empty_like(g)
        inv[..., 0, 0] = g[..., 1, 1]
        inv[..., 1, 1] = g[..., 0, 0]
        inv[..., 0, 1] = -g[..., 0, 1]
        inv[..., 1, 0] = -g[..., 1, 0]
        return inv / det[..., None, None]

    def sqrt_det_g0(self, pts: np.ndarray) -> np.ndarray:
        g = self.g0(pts)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        return np.sqrt(det)

    def conformal_factor(self, x1: np.ndarray, pts: np.ndarray) -> np.ndarray:
        if self.conformal is None:
            return np.ones(np.broadcast_shapes(np.shape(x1), np.asarray(pts).shape[:-1]))
        return self.conformal(np.asarray(x1, dtype=float), np.asarray(pts, dtype=float))

    def speed(self, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        g = self.g0(pts)
        return np.sqrt(np.einsum("...ij,...i,...j->...", g, vecs, vecs))

    def unit_vector(self, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        return vecs / self.speed(pts, vecs)[..., None]

    def boundary_cosine(self, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        """Metric pairing of a unit vector with the unit outward conormal."""
        n = self.domain.outward_normal(pts)
        ginv = self.g0_inv(pts)
        nn = np.einsum("...ij,...i,...j->...", ginv, n, n)
        return np.einsum("...i,...i->...", vecs, n) / np.sqrt(nn)

    # --- connection ---------------------------------------------------------

    def _fd(self) -> float:
        if self.fd_step is not None:
            return self.fd_step
        return 1e-5 * max(1.0, self.domain.diameter / 2.0)

    def metric_derivatives(self, pts: np.ndarray) -> np.ndarray:
        """Centered differences of the metric: ``D[..., l, j, k] = d_l g_jk``."""
        h = self._fd()
        pts = np.asarray(pts, dtype=float)
        out = np.empty(pts.shape[:-1] + (2, 2, 2))
        for axis in range(2):
            dp = np.zeros_like(pts)
            dp[..., axis] = h
            out[..., axis, :, :] = (self.g0(pts + dp) - self.g0(pts - dp)) / (2.0 * h)
        return out

    # --- constructors -------------------------------------------------------

    @classmethod
    def euclidean(cls, domain: Domain | None = None, **kw) -> "MetricChart":
        return cls(domain=domain or DiskDomain(), **kw)

    @classmethod
    def constant(cls, matrix: np.ndarray, domain: Domain | None = None, **kw) -> "MetricChart":
        matrix = np.asarray(matrix, dtype=float)
        w = np.linalg.eigvalsh(matrix)
        if np.any(w <= 0):
            raise ConfigurationError("constant metric must be SPD")

        def const_metric(pts: np.ndarray) -> np.ndarray:
            return np.broadcast_to(matrix, pts.shape[:-1] + (2, 2)).copy()

        return cls(domain=domain or DiskDomain(), metric=const_metric,
                   metric_is_constant=True, **kw)

    @classmethod
    def conformal_metric(cls, u: Callable[[np.ndarray], np.ndarray],
                         domain: Domain | None = None, **kw) -> "MetricChart":
        """Chart with metric ``exp(2 u(x')) * identity``."""

        def conf_metric(pts: np.ndarray) -> np.ndarray:
            s = np.exp(2.0 * u(pts))
            out = np.zeros(pts.shape[:-1] + (2, 2))
            out[..., 0, 0] = s
            out[..., 1, 1] = s
            return out

        return cls(domain=domain or DiskDomain(), metric=conf_metric,
                   metric_is_constant=False, **kw)

    @classmethod
    def from_metric_samples(cls, samples: np.ndarray, domain: Domain | None = None,
                            **kw) -> "MetricChart":
        """Chart whose metric is a smooth spline through grid samples.

        ``samples`` has shape ``(n2, n3, 2, 2)`` over the bounding box of the
        domain.  Derivatives along rays are still taken by centered
        differences of the (spline) evaluator, for uniformity with analytic
        metrics.
        """
        from scipy.interpolate import RectBivariateSpline

        domain = domain or DiskDomain()
        samples = np.asarray(samples, dtype=float)
        n2, n3 = samples.shape[0], samples.shape[1]
        x0, x1, y0, y1 = domain.bbox
        xs = np.linspace(x0, x1, n2)
        ys = np.linspace(y0, y1, n3)
        kx = min(3, n2 - 1)
        ky = min(3, n3 - 1)
        spl = [[RectBivariateSpline(xs, ys, samples[:, :, i, j], kx=kx, ky=ky)
                for j in range(2)] for i in range(2)]

        def sampled_metric(pts: np.ndarray) -> np.ndarray:
            p = np.asarray(pts, dtype=float)
            flat = p.reshape(-1, 2)
            out = np.empty((flat.shape[0], 2, 2))
            for i in range(2):
                for j in range(2):
                    out[:, i, j] = spl[i][j].ev(flat[:, 0], flat[:, 1])
            out = 0.5 * (out + np.swapaxes(out, -1, -2))
            return out.reshape(p.shape[:-1] + (2, 2))

        kw.setdefault("n2", n2)
        kw.setdefault("n3", n3)
        return cls(domain=domain, metric=sampled_metric, metric_is_constant=False, **kw)

    # --- validation -----------------------------------------------------------

    def validate(self, derivative_bound: float = 1e3) -> None:
        nodes = self.chart_nodes()
        g = self.g0(nodes)
        tr = g[..., 0, 0] + g[..., 1, 1]
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        if np.any(det <= 0) or np.any(tr <= 0):
            raise ConfigurationError("metric is not SPD at every chart node")
        if not np.allclose(g[..., 0, 1], g[..., 1, 0], atol=1e-12):
            raise ConfigurationError("metric is not symmetric")
        x1 = self.x1_axis[:, None, None]
        c = self.conformal_factor(x1, nodes[None, ...])
        if np.any(c <= 0):
            raise ConfigurationError("conformal factor must be positive")
        dg = self.metric_derivatives(nodes)
        if np.max(np.abs(dg)) > derivative_bound:
            raise ConfigurationError(
                f"metric derivative bound exceeded: {np.max(np.abs(dg)):.3g} > {derivative_bound:.3g}")


# ---------------------------------------------------------------------------
# connection coefficients

def christoffel(chart: MetricChart, pts: np.ndarray) -> np.ndarray:
    """Connection symbols ``Gamma[..., i, j, k]`` at interior chart points."""
    pts = np.asarray(pts, dtype=float)
    if np.any(chart.domain.boundary_defect(pts) >= 0):
        raise ChartDomainError("christoffel requested outside the open chart domain")
    return _christoffel_raw(chart, pts)


def _christoffel_raw(chart: MetricChart, pts: np.ndarray) -> np.ndarray:
    if chart.metric_is_constant:
        return np.zeros(pts.shape[:-1] + (2, 2, 2))
    ginv = chart.g0_inv(pts)
    D = chart.metric_derivatives(pts)
    # Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
    dj = np.einsum("...jlk->...ljk", D)   # d_j g_lk indexed as [l, j, k]
    dk = np.einsum("...klj->...ljk", D)   # d_k g_lj indexed as [l, j, k]
    dl = D                                # d_l g_jk indexed as [l, j, k]
    gamma = 0.5 * np.einsum("...il,...ljk->...ijk", ginv, dj + dk - dl)
    return gamma


def _geodesic_acc(chart: MetricChart, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    if chart.metric_is_constant:
        return np.zeros_like(v)
    gamma = _christoffel_raw(chart, x)
    return -np.einsum("...ijk,...j,...k->...i", gamma, v, v)


def _rk4_step(chart: MetricChart, x: np.ndarray, v: np.ndarray, h: float | np.ndarray):
    if np.ndim(h) > 0:
        h = np.asarray(h)[..., None]
    k1x, k1v = v, _geodesic_acc(chart, x, v)
    k2x = v + 0.5 * h * k1v
    k2v = _geodesic_acc(chart, x + 0.5 * h * k1x, k2x)
    k3x = v + 0.5 * h * k2v
    k3v = _geodesic_acc(chart, x + 0.5 * h * k2x, k3x)
    k4x = v + h * k3v
    k4v = _geodesic_acc(chart, x + h * k3x, k4x)
    xn = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    vn = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return xn, vn


# ---------------------------------------------------------------------------
# traced paths

@dataclass
class GeodesicPath:
    """Unit-speed geodesic sampled from boundary entry to boundary exit."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    exit_time: float
    nontangential: bool = True

    @property
    def start(self) -> np.ndarray:
        return self.x[0]

    @property
    def direction(self) -> np.ndarray:
        return self.xi[0]

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.xi))

    def quadrature_weights(self) -> np.ndarray:
        t = self.t
        w = np.zeros_like(t)
        if len(t) < 2:
            return w
        dt = np.diff(t)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return w


def default_step(chart: MetricChart) -> float:
    return chart.domain.diameter / 512.0


def _trace_batch(chart: MetricChart, x0: np.ndarray, v0: np.ndarray, step: float,
                 t_cap: float, eps_exit: float):
    """Trace many geodesics at once; returns padded history plus exit data."""
    n = x0.shape[0]
    x = x0.copy()
    v = v0.copy()
    alive = np.ones(n, dtype=bool)
    trapped = np.zeros(n, dtype=bool)
    exit_idx = np.full(n, -1, dtype=int)
    bracket_x = np.zeros_like(x0)
    bracket_v = np.zeros_like(v0)

    hist_x = [x0.copy()]
    hist_v = [v0.copy()]
    n_cap = int(np.ceil(t_cap / step))

    k = 0
    while alive.any():
        if k >= n_cap:
            trapped[alive] = True
            alive[:] = False
            break
        xn, vn = _rk4_step(chart, x[alive], v[alive], step)
        defect = chart.domain.boundary_defect(xn)
        crossed = defect >= 0.0
        idx_alive = np.flatnonzero(alive)
        idx_cross = idx_alive[crossed]
        # last inside state is the bracket start for the exit bisection
        bracket_x[idx_cross] = x[idx_cross]
        bracket_v[idx_cross] = v[idx_cross]
        exit_idx[idx_cross] = k
        x[idx_alive[~crossed]] = xn[~crossed]
        v[idx_alive[~crossed]] = vn[~crossed]
        alive[idx_cross] = False
        k += 1
        hx = hist_x[-1].copy()
        hv = hist_v[-1].copy()
        hx[idx_alive[~crossed]] = xn[~crossed]
        hv[idx_alive[~crossed]] = vn[~crossed]
        hist_x.append(hx)
        hist_v.append(hv)

    POS = np.stack(hist_x, axis=1)
    VEL = np.stack(hist_v, axis=1)

    exited = exit_idx >= 0
    delta = np.full(n, np.nan)
    exit_x = np.zeros_like(x0)
    exit_v = np.zeros_like(v0)
    if exited.any():
        bx = bracket_x[exited]
        bv = bracket_v[exited]
        lo = np.zeros(bx.shape[0])
        hi = np.full(bx.shape[0], step)
        n_iter = max(1, int(np.ceil(np.log2(step / eps_exit))))
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            xm, _ = _rk4_step(chart, bx, bv, mid)
            inside = chart.domain.boundary_defect(xm) < 0.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        dstar = 0.5 * (lo + hi)
        xe, ve = _rk4_step(chart, bx, bv, dstar)
        delta[exited] = dstar
        exit_x[exited] = xe
        exit_v[exited] = ve

    return POS, VEL, exit_idx, delta, exit_x, exit_v, trapped


def _assemble_path(step: float, POS, VEL, exit_idx, delta, exit_x, exit_v, r: int) -> GeodesicPath:
    m = exit_idx[r]
    t = np.arange(m + 1) * step
    tau = m * step + delta[r]
    t = np.append(t, tau)
    x = np.vstack([POS[r, : m + 1], exit_x[r][None, :]])
    xi = np.vstack([VEL[r, : m + 1], exit_v[r][None, :]])
    return GeodesicPath(t=t, x=x, xi=xi, exit_time=float(tau))


def trace_geodesic(chart: MetricChart, x: np.ndarray, xi: np.ndarray,
                   step: float | None = None, eps_exit: float = DEFAULT_EPS_EXIT,
                   t_cap: float | None = None) -> GeodesicPath:
    """Trace one geodesic from a boundary point with a unit inflow direction."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if abs(chart.domain.boundary_defect(x)) > 1e-6 * chart.domain.diameter:
        raise ChartDomainError("start point must lie on the chart boundary")
    sp = float(chart.speed(x, xi))
    if abs(sp - 1.0) > 1e-8:
        raise ChartDomainError(f"direction must be unit for the chart metric (|xi| = {sp:.2e})")
    if float(chart.boundary_cosine(x, xi)) >= 0.0:
        raise ChartDomainError("direction must point strictly into the domain")
    if step is None:
        step = default_step(chart)
    if t_cap is None:
        t_cap = TRAP_CAP_FACTOR * chart.domain.diameter

    POS, VEL, exit_idx, delta, exit_x, exit_v, trapped = _trace_batch(
        chart, x[None, :], xi[None, :], step, t_cap, eps_exit)
    if trapped[0]:
        raise TrappedRayError(
            f"geodesic did not exit within the arc-length cap {t_cap:.3g}", arc_length=t_cap)
    path = _assemble_path(step, POS, VEL, exit_idx, delta, exit_x, exit_v, 0)
    path.nontangential = is_nontangential(chart, path)
    return path


def is_nontangential(chart: MetricChart, path: GeodesicPath,
                     eps_tan: float = DEFAULT_EPS_TAN) -> bool:
    """True when the path meets the boundary transversally at both ends."""
    if path.exit_time <= 0.0 or len(path.t) < 2:
        return False
    c_in = abs(float(chart.boundary_cosine(path.x[0], path.xi[0])))
    c_out = abs(float(chart.boundary_cosine(path.x[-1], path.xi[-1])))
    if c_in <= eps_tan or c_out <= eps_tan:
        return False
    interior = path.x[1:-1]
    if interior.size and np.any(chart.domain.boundary_defect(interior) >= 0.0):
        return False
    return True


# ---------------------------------------------------------------------------
# ray families

@dataclass
class RaySet:
    """Family of traced nontangential inflow geodesics with padded storage."""

    chart: MetricChart
    x0: np.ndarray          # (n, 2) entry points
    xi0: np.ndarray         # (n, 2) unit inflow directions
    t: np.ndarray           # (n, s) sample arc lengths, nan padded
    pos: np.ndarray         # (n, s, 2)
    vel: np.ndarray         # (n, s, 2)
    mask: np.ndarray        # (n, s) valid-sample mask
    tau: np.ndarray         # (n,) exit times
    lengths: np.ndarray     # (n,) sample counts
    step: float
    eps_tan: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_rays(self) -> int:
        return self.x0.shape[0]

    @property
    def entries(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.x0[i], self.xi0[i]) for i in range(self.n_rays)]

    def path(self, i: int) -> GeodesicPath:
        m = self.lengths[i]
        return GeodesicPath(t=self.t[i, :m].copy(), x=self.pos[i, :m].copy(),
                            xi=self.vel[i, :m].copy(), exit_time=float(self.tau[i]),
                            nontangential=True)

    def paths(self) -> list[GeodesicPath]:
        return [self.path(i) for i in range(self.n_rays)]

    def quadrature_weights(self) -> np.ndarray:
        """Composite trapezoid weights over each ray's samples, zero padded."""
        t = np.where(self.mask, self.t, 0.0)
        n, s = t.shape
        w = np.zeros((n, s))
        dt = np.diff(t, axis=1)
        dt = np.where(self.mask[:, 1:], dt, 0.0)
        w[:, :-1] += 0.5 * dt
        w[:, 1:] += 0.5 * dt
        return w

    def reversed_pairing(self, tol: float = 1e-6) -> np.ndarray:
        """Index of the orientation-reversed companion of each ray (-1 if absent)."""
        key_in = np.concatenate([self.x0, self.xi0], axis=1)
        key_out = np.concatenate(
            [np.array([self.pos[i, self.lengths[i] - 1] for i in range(self.n_rays)]),
             -np.array([self.vel[i, self.lengths[i] - 1] for i in range(self.n_rays)])],
            axis=1)
        out = np.full(self.n_rays, -1, dtype=int)
        scale = max(1.0, self.chart.domain.diameter)
        quant = np.round(key_in / (tol * scale)).astype(np.int64)
        lut = {}
        for i in range(self.n_rays):
            lut.setdefault(tuple(quant[i]), []).append(i)
        quant_out = np.round(key_out / (tol * scale)).astype(np.int64)
        for i in range(self.n_rays):
            center = quant_out[i]
            best, best_d = -1, np.inf
            for dx in (-1, 0, 1):
                for cand in lut.get(tuple(center + dx), []):
                    d = np.linalg.norm(key_in[cand] - key_out[i])
                    if d < best_d:
                        best, best_d = cand, d
            if best >= 0 and best_d < tol * scale * 10:
                out[i] = best
        return out


def rayset_from_entries(chart: MetricChart, entries: Sequence[tuple], step: float | None = None,
                        eps_tan: float = DEFAULT_EPS_TAN,
                        t_cap: float | None = None) -> RaySet:
    """Trace an explicit list of (point, direction) inflow entries into a RaySet."""
    if len(entries) == 0:
        raise ConfigurationError("at least one entry is required")
    if step is None:
        step = default_step(chart)
    if t_cap is None:
        t_cap = TRAP_CAP_FACTOR * chart.domain.diameter
    X0 = np.asarray([e[0] for e in entries], dtype=float)
    V0 = chart.unit_vector(X0, np.asarray([e[1] for e in entries], dtype=float))
    defect = np.abs(chart.domain.boundary_defect(X0))
    if np.any(defect > 1e-6 * chart.domain.diameter):
        raise ChartDomainError("entry points must lie on the chart boundary")
    if np.any(chart.boundary_cosine(X0, V0) >= 0.0):
        raise ChartDomainError("entry directions must point strictly inward")
    POS, VEL, exit_idx, delta, exit_x, exit_v, trapped = _trace_batch(
        chart, X0, V0, step, t_cap, eps_exit=DEFAULT_EPS_EXIT)
    if trapped.any():
        raise TrappedRayError("explicit ray set contains trapped rays")
    n = X0.shape[0]
    lengths = exit_idx + 2
    smax = int(lengths.max())
    T = np.full((n, smax), np.nan)
    P = np.zeros((n, smax, 2))
    V = np.zeros((n, smax, 2))
    M = np.zeros((n, smax), dtype=bool)
    tau = np.zeros(n)
    for row in range(n):
        m = exit_idx[row]
        tau[row] = m * step + delta[row]
        T[row, : m + 1] = np.arange(m + 1) * step
        T[row, m + 1] = tau[row]
        P[row, : m + 1] = POS[row, : m + 1]
        P[row, m + 1] = exit_x[row]
        V[row, : m + 1] = VEL[row, : m + 1]
        V[row, m + 1] = exit_v[row]
        M[row, : m + 2] = True
    meta = {"n_rays": n, "explicit": True}
    return RaySet(chart=chart, x0=X0, xi0=V0, t=T, pos=P, vel=V, mask=M,
                  tau=tau, lengths=lengths, step=step, eps_tan=eps_tan, metadata=meta)


def sample_inflow_boundary(chart: MetricChart, n_pts: int, n_dirs: int,
                           eps_tan: float = DEFAULT_EPS_TAN,
                           step: float | None = None,
                           t_cap: float | None = None) -> RaySet:
    """Deterministic uniform family of inflow rays, traced and filtered.

    Boundary points are uniform in the boundary parameter; directions fan
    uniformly over the inflow half-space at each point.  Trapped and
    tangential candidates are dropped and counted in the metadata.
    """
    if n_pts < 1 or n_dirs < 1:
        raise ConfigurationError("n_pts and n_dirs must be at least 1")
    if step is None:
        step = default_step(chart)
    if t_cap is None:
        t_cap = TRAP_CAP_FACTOR * chart.domain.diameter

    s = np.arange(n_pts) / n_pts
    bpts = chart.domain.boundary_point(s)
    normals = chart.domain.outward_normal(bpts)
    tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=-1)

    beta = -np.pi / 2.0 + np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
    # direction fan measured from the inward Euclidean normal
    dirs = (np.cos(beta)[None, :, None] * (-normals[:, None, :])
            + np.sin(beta)[None, :, None] * tangents[:, None, :])
    X0 = np.repeat(bpts, n_dirs, axis=0)
    V0 = dirs.reshape(-1, 2)
    V0 = chart.unit_vector(X0, V0)

    cosines = chart.boundary_cosine(X0, V0)
    keep = cosines < -eps_tan
    n_tangential_entry = int(np.sum(~keep))
    X0, V0 = X0[keep], V0[keep]

    POS, VEL, exit_idx, delta, exit_x, exit_v, trapped = _trace_batch(
        chart, X0, V0, step, t_cap, eps_exit=DEFAULT_EPS_EXIT)

    n_trapped = int(np.sum(trapped))
    good = ~trapped

    # exit transversality and interior confinement
    cos_exit = np.zeros(X0.shape[0])
    cos_exit[good] = chart.boundary_cosine(exit_x[good], exit_v[good])
    good &= np.abs(cos_exit) > eps_tan
    n_tangential_exit = int(np.sum(~good & ~trapped))

    idx = np.flatnonzero(good)
    if idx.size == 0:
        raise ConfigurationError("ray sampling produced no admissible rays")

    lengths = exit_idx[idx] + 2
    smax = int(lengths.max())
    n = idx.size
    T = np.full((n, smax), np.nan)
    P = np.zeros((n, smax, 2))
    V = np.zeros((n, smax, 2))
    M = np.zeros((n, smax), dtype=bool)
    tau = np.zeros(n)
    for row, r in enumerate(idx):
        m = exit_idx[r]
        tau[row] = m * step + delta[r]
        T[row, : m + 1] = np.arange(m + 1) * step
        T[row, m + 1] = tau[row]
        P[row, : m + 1] = POS[r, : m + 1]
        P[row, m + 1] = exit_x[r]
        V[row, : m + 1] = VEL[r, : m + 1]
        V[row, m + 1] = exit_v[r]
        M[row, : m + 2] = True

    meta = {
        "n_boundary_points": n_pts,
        "n_directions": n_dirs,
        "eps_tan": eps_tan,
        "n_candidates": n_pts * n_dirs,
        "n_dropped_tangential_entry": n_tangential_entry,
        "n_dropped_trapped": n_trapped,
        "n_dropped_tangential_exit": n_tangential_exit,
        "n_rays": n,
    }
    return RaySet(chart=chart, x0=X0[idx], xi0=V0[idx], t=T, pos=P, vel=V,
                  mask=M, tau=tau, lengths=lengths, step=step, eps_tan=eps_tan,
                  metadata=meta)
