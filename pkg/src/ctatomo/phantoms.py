"""Analytic phantom library.

Every phantom is built from smooth bumps with exact compact support, so
ground truths have closed forms, ray integrands can be evaluated without
grid interpolation, and axial Fourier integrals converge superalgebraically
under uniform quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .forms import OneForm0, OneForm3, ScalarField0, ScalarField3
from .manifold import MetricChart


def bump(t: np.ndarray) -> np.ndarray:
    """Standard smooth bump: exp(1 - 1/(1 - t^2)) inside |t| < 1, zero outside."""
    t = np.asarray(t, dtype=float)
    s = t * t
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


def bump_prime(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = t * t
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
    return np.where(inside, val * (-2.0 * t) / (1.0 - safe) ** 2, 0.0)


def profile_1d(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0):
    """1-d bump profile and its derivative as closures."""

    def f(x):
        return amplitude * bump((np.asarray(x) - center) / width)

    def fp(x):
        return amplitude / width * bump_prime((np.asarray(x) - center) / width)

    return f, fp


def poly_profile_1d(center: float = 0.0, width: float = 1.0,
                    amplitude: float = 1.0, power: int = 4):
    """1-d polynomial bump (1 - t^2)^power and derivative; gentle on grids."""

    def f(x):
        t = (np.asarray(x) - center) / width
        s = t * t
        return amplitude * np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** power, 0.0)

    def fp(x):
        t = (np.asarray(x) - center) / width
        s = t * t
        base = np.where(s < 1.0, -power * (1.0 - np.minimum(s, 1.0)) ** (power - 1), 0.0)
        return amplitude * base * 2.0 * t / width

    return f, fp


def radial_bump_2d(center=(0.0, 0.0), width: float = 0.6, amplitude: float = 1.0):
    """Radial chart bump and its gradient components as closures."""
    cx, cy = center

    def f(pts):
        r = np.hypot(pts[..., 0] - cx, pts[..., 1] - cy)
        return amplitude * bump(r / width)

    def make_grad(axis):
        def g(pts):
            dx = pts[..., 0] - cx
            dy = pts[..., 1] - cy
            r = np.hypot(dx, dy)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r > 0, (dx if axis == 0 else dy) / np.where(r > 0, r, 1.0), 0.0)
            return amplitude / width * bump_prime(r / width) * unit
        return g

    return f, make_grad(0), make_grad(1)


def radial_poly_bump_2d(center=(0.0, 0.0), width: float = 0.7,
                        amplitude: float = 1.0, power: int = 4):
    """Quartic-type radial bump: compact support with moderate derivatives.

    Gentler than the exponential bump near its support edge, which keeps
    grid representations of reconstruction phantoms second-order clean.
    """
    cx, cy = center

    def f(pts):
        s = ((pts[..., 0] - cx) ** 2 + (pts[..., 1] - cy) ** 2) / width**2
        return amplitude * np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** power, 0.0)

    def make_grad(axis):
        def g(pts):
            dx = pts[..., 0] - cx
            dy = pts[..., 1] - cy
            s = (dx**2 + dy**2) / width**2
            base = np.where(s < 1.0,
                            -power * (1.0 - np.minimum(s, 1.0)) ** (power - 1), 0.0)
            comp = dx if axis == 0 else dy
            return amplitude * base * 2.0 * comp / width**2
        return g

    return f, make_grad(0), make_grad(1)


# ---------------------------------------------------------------------------
# separable fields on the product grid

@dataclass
class AxialTerm:
    """Contribution s(x1) * chi(x') to the axial 1-form component."""
    s: Callable
    chi: Callable


@dataclass
class TransversalTerm:
    """Contribution s(x1) * (v1(x'), v2(x')) to the transversal components."""
    s: Callable
    v1: Callable
    v2: Callable


@dataclass
class SeparableOneForm3:
    """Sum of separable terms; carries exact component callables."""

    chart: MetricChart
    axial_terms: list[AxialTerm] = field(default_factory=list)
    transversal_terms: list[TransversalTerm] = field(default_factory=list)
    support_x1: tuple[float, float] = (-1.0, 1.0)

    def f1(self, x1, pts):
        out = 0.0
        for t in self.axial_terms:
            out = out + t.s(x1) * t.chi(pts)
        return out if not np.isscalar(out) else np.zeros(np.broadcast_shapes(np.shape(x1), np.shape(pts)[:-1]))

    def f2(self, x1, pts):
        out = 0.0
        for t in self.transversal_terms:
            out = out + t.s(x1) * t.v1(pts)
        return out if not np.isscalar(out) else np.zeros(np.broadcast_shapes(np.shape(x1), np.shape(pts)[:-1]))

    def f3(self, x1, pts):
        out = 0.0
        for t in self.transversal_terms:
            out = out + t.s(x1) * t.v2(pts)
        return out if not np.isscalar(out) else np.zeros(np.broadcast_shapes(np.shape(x1), np.shape(pts)[:-1]))

    def to_grid(self) -> OneForm3:
        return OneForm3.sample(self.chart, self.f1, self.f2, self.f3)


@dataclass
class SeparableScalar3:
    """Sum of separable scalar terms s(x1) * chi(x')."""

    chart: MetricChart
    terms: list[AxialTerm] = field(default_factory=list)
    support_x1: tuple[float, float] = (-1.0, 1.0)

    def __call__(self, x1, pts):
        out = 0.0
        for t in self.terms:
            out = out + t.s(x1) * t.chi(pts)
        return out if not np.isscalar(out) else np.zeros(np.broadcast_shapes(np.shape(x1), np.shape(pts)[:-1]))

    def to_grid(self) -> ScalarField3:
        return ScalarField3.sample(self.chart, self.__call__)


# ---------------------------------------------------------------------------
# named phantoms

def gradient_phantom(chart: MetricChart, amplitude: float = 1.0,
                     x1_width: float | None = None, chart_width: float = 0.68,
                     center=(0.0, 0.0), x1_center: float = 0.0):
    """Exact-form potential: A = d(phi0) with phi0 = S(x1) psi(x'), zero trace.

    Returns ``(phi0, A)`` where phi0 is a SeparableScalar3 and A the matching
    SeparableOneForm3 with analytically differentiated components.  The axial
    profile is an exponential bump (superalgebraic Fourier decay); the chart
    factor is polynomial so grid representations stay gentle.  An off-center
    axial profile keeps every axial moment nonzero, which exercises the full
    certification ladder.
    """
    a = chart.x1_half
    if x1_width is None:
        x1_width = 0.35 * a
    S, Sp = poly_profile_1d(x1_center, x1_width, amplitude)
    psi, psix, psiy = radial_poly_bump_2d(center, chart_width, 1.0)

    support = (x1_center - x1_width, x1_center + x1_width)
    phi0 = SeparableScalar3(chart, [AxialTerm(S, psi)], support_x1=support)
    A = SeparableOneForm3(
        chart,
        axial_terms=[AxialTerm(Sp, psi)],
        transversal_terms=[TransversalTerm(S, psix, psiy)],
        support_x1=support,
    )
    return phi0, A


def coulomb_phantom(chart: MetricChart, amplitude: float = 1.0,
                    x1_width: float | None = None, chart_width: float = 0.7,
                    axial_amplitude: float = 1.0):
    """Magnetic potential in the transversal Coulomb gauge per axial slice.

    The transversal part is the rotation of a stream bump, which has zero
    transversal codifferential for any conformal chart metric; the axial part
    is a plain bump.  Zero boundary trace by compact support.
    """
    a = chart.x1_half
    if x1_width is None:
        x1_width = 0.35 * a
    b1, _ = poly_profile_1d(0.0, x1_width, axial_amplitude)
    s1, _ = poly_profile_1d(0.0, x1_width * 1.15, amplitude)
    chi, _, _ = radial_poly_bump_2d((0.12, -0.05), chart_width, 1.0)
    _, psix, psiy = radial_poly_bump_2d((-0.08, 0.1), chart_width, 1.0)

    support = (-max(x1_width, x1_width * 1.15), max(x1_width, x1_width * 1.15))
    A = SeparableOneForm3(
        chart,
        axial_terms=[AxialTerm(b1, chi)],
        transversal_terms=[TransversalTerm(s1, lambda p: -psiy(p), psix)],
        support_x1=support,
    )
    return A


def electric_phantom(chart: MetricChart, amplitude: float = 1.0,
                     x1_width: float | None = None, chart_width: float = 0.65,
                     center=(0.05, 0.0)):
    """Smooth compactly supported electric potential difference."""
    a = chart.x1_half
    if x1_width is None:
        x1_width = 0.35 * a
    Q, _ = poly_profile_1d(0.0, x1_width, amplitude)
    chi, _, _ = radial_poly_bump_2d(center, chart_width, 1.0)
    return SeparableScalar3(chart, [AxialTerm(Q, chi)], support_x1=(-x1_width, x1_width))


@dataclass
class SeparableConformal:
    """Conformal factor 1 + amplitude * C1(x1) * C2(x') with separable bump."""

    amplitude: float
    C1: Callable
    C2: Callable

    def __call__(self, x1, pts):
        return 1.0 + self.amplitude * self.C1(x1) * self.C2(pts)

    def multiply_separable(self, q: "SeparableScalar3") -> "SeparableScalar3":
        """Exact separable expansion of q * c."""
        terms = list(q.terms)
        extra = []
        for t in q.terms:
            s_old, chi_old = t.s, t.chi
            amp, C1, C2 = self.amplitude, self.C1, self.C2
            extra.append(AxialTerm(
                s=lambda x, s_old=s_old, C1=C1, amp=amp: amp * s_old(x) * C1(x),
                chi=lambda p, chi_old=chi_old, C2=C2: chi_old(p) * C2(p)))
        return SeparableScalar3(q.chart, terms + extra, support_x1=q.support_x1)


def bump_conformal_factor(amplitude: float = 0.2, x1_width: float = 1.0,
                          chart_width: float = 0.8) -> SeparableConformal:
    """Conformal factor c = 1 + amplitude * bump(x1) * bump(x'); separable."""
    C1, _ = poly_profile_1d(0.0, x1_width, 1.0)
    C2, _, _ = radial_poly_bump_2d((0.0, 0.0), chart_width, 1.0)
    return SeparableConformal(amplitude, C1, C2)


def add_gradient(A: SeparableOneForm3, phi: "SeparableScalar3",
                 d_phi_terms) -> SeparableOneForm3:
    """Separable sum A + d(phi) given the differentiated terms of phi.

    ``d_phi_terms`` is a list of ``(s, s_prime, chi, chi_x, chi_y)`` closures
    for each separable term of phi.
    """
    axial = list(A.axial_terms)
    trans = list(A.transversal_terms)
    lo, hi = A.support_x1
    for s, sp_, chi, chi_x, chi_y in d_phi_terms:
        axial.append(AxialTerm(sp_, chi))
        trans.append(TransversalTerm(s, chi_x, chi_y))
    plo, phi_hi = phi.support_x1
    support = (min(lo, plo), max(hi, phi_hi))
    return SeparableOneForm3(A.chart, axial, trans, support)


def gauge_shift_phantom(chart: MetricChart, amplitude: float = 0.5,
                        x1_width: float | None = None, chart_width: float = 0.6,
                        center=(-0.1, 0.08)):
    """Interior gauge potential p and the pieces of its differential."""
    a = chart.x1_half
    if x1_width is None:
        x1_width = 0.3 * a
    S, Sp = poly_profile_1d(0.0, x1_width, amplitude)
    psi, psix, psiy = radial_poly_bump_2d(center, chart_width, 1.0)
    p = SeparableScalar3(chart, [AxialTerm(S, psi)], support_x1=(-x1_width, x1_width))
    return p, [(S, Sp, psi, psix, psiy)]


def random_interior_potential(chart: MetricChart, rng: np.random.Generator,
                              n_bumps: int = 3, margin: float = 0.25):
    """Random sum of interior chart bumps with zero boundary trace.

    Returns ``(p, dp)`` as a sampled scalar field and a 1-form, both carrying
    analytic callables; the gradient is differentiated in closed form.
    """
    r_max = chart.domain.diameter / 2.0
    parts = []
    for _ in range(n_bumps):
        w = rng.uniform(0.25, 0.45) * r_max
        rad = rng.uniform(0.0, max(1e-6, r_max - margin * r_max - w))
        ang = rng.uniform(0.0, 2 * np.pi)
        center = (rad * np.cos(ang), rad * np.sin(ang))
        amp = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        parts.append(radial_bump_2d(center, w, amp))

    def p_fn(pts):
        return sum(f(pts) for f, _, _ in parts)

    def px_fn(pts):
        return sum(gx(pts) for _, gx, _ in parts)

    def py_fn(pts):
        return sum(gy(pts) for _, _, gy in parts)

    p = ScalarField0.sample(chart, p_fn)
    dp = OneForm0.sample(chart, px_fn, py_fn)
    return p, dp
