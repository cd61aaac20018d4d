import numpy as np
import pytest
from scipy.integrate import quad

from ctatomo.forms import (
    OneForm0,
    ScalarField0,
    exterior_d,
    norm_oneform,
    norm_oneform_domain,
    norm_scalar,
    norm_scalar_domain,
)
from ctatomo.manifold import (
    DiskDomain,
    MetricChart,
    rayset_from_entries,
    sample_inflow_boundary,
)
from ctatomo.phantoms import radial_bump_2d, random_interior_potential
from ctatomo.xray import (
    attenuated_transform,
    fbp_disk,
    invert_transform,
    moment_transform,
    xray_transform,
)


@pytest.fixture(scope="module")
def disk_chart():
    return MetricChart.euclidean(DiskDomain(1.0), n2=32, n3=32)


@pytest.fixture(scope="module")
def diameter_ray(disk_chart):
    return rayset_from_entries(disk_chart, [((-1.0, 0.0), (1.0, 0.0))], step=2.0 / 512)


@pytest.fixture(scope="module")
def dense_rays(disk_chart):
    return sample_inflow_boundary(disk_chart, n_pts=48, n_dirs=48)


@pytest.fixture(scope="module")
def inversion_rays(disk_chart):
    # joint (f, alpha) inversion wants a clear row surplus over the unknowns
    return sample_inflow_boundary(disk_chart, n_pts=64, n_dirs=64)


def const_one(chart):
    return ScalarField0.sample(chart, lambda pts: np.ones(pts.shape[:-1]))


class TestForwardTransforms:
    def test_zero_fields_give_zero(self, disk_chart, dense_rays):
        out = xray_transform(disk_chart, None, None, dense_rays)
        assert np.all(out == 0)

    @pytest.mark.parametrize("rho", [0.0, 0.35, 0.8])
    def test_unit_function_chord_length(self, disk_chart, rho):
        rays = rayset_from_entries(
            disk_chart, [((-np.sqrt(1 - rho**2), rho), (1.0, 0.0))], step=2.0 / 512)
        out = xray_transform(disk_chart, const_one(disk_chart), None, rays)
        assert out[0].real == pytest.approx(2.0 * np.sqrt(1.0 - rho**2), abs=1e-8)

    def test_gradient_kernel_annihilation_analytic(self, disk_chart, dense_rays):
        rng = np.random.default_rng(11)
        p, dp = random_interior_potential(disk_chart, rng)
        vals = xray_transform(disk_chart, None, dp, dense_rays)
        scale = np.max(np.abs(np.concatenate([dp.c1.ravel(), dp.c2.ravel()])))
        tol = 10 * 1e-9 * scale * disk_chart.domain.diameter
        assert np.max(np.abs(vals)) <= tol

    def test_attenuated_diameter_oracle(self, disk_chart):
        # f = 1 along the diameter with lam = 1: integral of e^-t over [0, 2]
        ray = rayset_from_entries(disk_chart, [((-1.0, 0.0), (1.0, 0.0))], step=2.0 / 4096)
        out = attenuated_transform(disk_chart, const_one(disk_chart), None, ray, 1.0)
        assert out[0].real == pytest.approx(1.0 - np.exp(-2.0), abs=5e-8)

    def test_attenuated_at_zero_matches_plain_convention_bitwise(self, disk_chart, dense_rays):
        f, fx, fy = radial_bump_2d((0.1, -0.05), 0.6, 1.3)
        fld = ScalarField0.sample(disk_chart, f)
        alpha = OneForm0.sample(disk_chart, fx, fy)
        att = attenuated_transform(disk_chart, fld, alpha, dense_rays, 0.0)
        plain = xray_transform(disk_chart, fld, (-1j) * alpha, dense_rays)
        assert np.array_equal(att, plain)

    def test_attenuation_breaks_gauge_kernel(self, disk_chart):
        # brute-force quadrature oracle along one explicit chord
        p, px, py = radial_bump_2d((0.0, 0.0), 0.6, 1.0)
        dp = OneForm0.sample(disk_chart, px, py)
        lam = 1.5
        x0 = np.array([-np.sqrt(1 - 0.04), 0.2])
        rays2 = rayset_from_entries(disk_chart, [((x0[0], 0.2), (1.0, 0.0))], step=2.0 / 1024)
        got = attenuated_transform(disk_chart, None, dp, rays2, lam)[0]
        tau = 2 * np.sqrt(1 - 0.04)

        def integrand(t):
            pt = np.array([x0[0] + t, 0.2])
            return px(pt[None, :])[0] * np.exp(-lam * t)

        expected = -1j * quad(integrand, 0.0, tau, limit=200)[0]
        assert got == pytest.approx(expected, abs=1e-8)
        assert abs(got) > 1e-3  # attenuation genuinely breaks the cancellation

    def test_moment_oracles_on_diameter(self, disk_chart, diameter_ray):
        one = const_one(disk_chart)
        m0 = moment_transform(disk_chart, one, None, diameter_ray, 0)
        m1 = moment_transform(disk_chart, one, None, diameter_ray, 1)
        m2 = moment_transform(disk_chart, one, None, diameter_ray, 2)
        assert m0[0].real == pytest.approx(2.0, abs=1e-8)
        assert m1[0].real == pytest.approx(2.0, abs=1e-7)       # integral of t dt
        assert m2[0].real == pytest.approx(8.0 / 3.0, abs=1e-5)  # integral of t^2 dt

    def test_moment_zero_matches_plain_convention(self, disk_chart, dense_rays):
        f, fx, fy = radial_bump_2d((0.0, 0.1), 0.55, 0.8)
        fld = ScalarField0.sample(disk_chart, f)
        alpha = OneForm0.sample(disk_chart, fx, fy)
        m0 = moment_transform(disk_chart, fld, alpha, dense_rays, 0)
        plain = xray_transform(disk_chart, fld, (-1j) * alpha, dense_rays)
        assert np.array_equal(m0, plain)

    def test_linearity(self, disk_chart, dense_rays):
        f1 = ScalarField0.sample(disk_chart, radial_bump_2d((0.1, 0.0), 0.5, 1.0)[0])
        f2 = ScalarField0.sample(disk_chart, radial_bump_2d((-0.2, 0.1), 0.6, 1.0)[0])
        a, b = 2.3, -1.7 + 0.4j
        lhs = xray_transform(disk_chart, a * f1 + b * f2, None, dense_rays)
        rhs = (a * xray_transform(disk_chart, f1, None, dense_rays)
               + b * xray_transform(disk_chart, f2, None, dense_rays))
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_lambda_derivative_consistency(self, disk_chart, dense_rays):
        f = ScalarField0.sample(disk_chart, radial_bump_2d((0.0, 0.0), 0.6, 1.0)[0])
        dl = 1e-3
        dplus = attenuated_transform(disk_chart, f, None, dense_rays, dl)
        dminus = attenuated_transform(disk_chart, f, None, dense_rays, -dl)
        fd = (dplus - dminus) / (2 * dl)
        m1 = moment_transform(disk_chart, f, None, dense_rays, 1)
        # d/dlam at 0 equals minus the first moment
        assert np.max(np.abs(fd + m1)) <= 5e-5 * np.max(np.abs(m1))


class TestInversion:
    def test_zero_data_gives_zero_fields(self, disk_chart, dense_rays):
        res = invert_transform(np.zeros(dense_rays.n_rays), dense_rays, disk_chart)
        assert np.all(res.f.values == 0)
        assert np.all(res.alpha.c1 == 0)

    def test_function_round_trip(self, disk_chart, inversion_rays):
        f_fn, _, _ = radial_bump_2d((0.1, -0.05), 0.55, 1.0)
        f = ScalarField0.sample(disk_chart, f_fn)
        data = xray_transform(disk_chart, f, None, inversion_rays)
        res = invert_transform(data, inversion_rays, disk_chart)
        err = norm_scalar_domain(ScalarField0(disk_chart, res.f.values - f.values))
        rel = err / norm_scalar_domain(f)
        assert rel <= 0.05
        assert norm_oneform_domain(res.alpha) <= 0.05 * norm_scalar_domain(f)

    def test_solenoidal_round_trip(self, disk_chart, inversion_rays):
        _, px, py = radial_bump_2d((0.0, 0.05), 0.6, 1.0)
        alpha = OneForm0.sample(disk_chart, lambda p: -py(p), px)
        data = xray_transform(disk_chart, None, alpha, inversion_rays)
        res = invert_transform(data, inversion_rays, disk_chart)
        err = norm_oneform_domain(res.alpha - alpha) / norm_oneform_domain(alpha)
        assert err <= 0.10
        assert norm_scalar_domain(res.f) <= 0.05 * norm_oneform_domain(alpha)

    def test_inversion_respects_gauge_kernel(self, disk_chart, dense_rays):
        rng = np.random.default_rng(5)
        p, dp = random_interior_potential(disk_chart, rng)
        data = xray_transform(disk_chart, None, dp, dense_rays)
        res = invert_transform(data, dense_rays, disk_chart)
        # compare against inverting synthetic noise of the same magnitude
        noise = np.max(np.abs(data)) * np.exp(
            2j * np.pi * rng.random(dense_rays.n_rays))
        base = invert_transform(noise, dense_rays, disk_chart)
        f_norm = norm_scalar(res.f)
        dalpha_norm = float(np.linalg.norm(exterior_d(res.alpha).values))
        base_f = norm_scalar(base.f)
        base_da = float(np.linalg.norm(exterior_d(base.alpha).values))
        assert f_norm <= 10 * max(base_f, 1e-14)
        assert dalpha_norm <= 10 * max(base_da, 1e-14)

    def test_diagnostics_reported(self, disk_chart, dense_rays):
        f = ScalarField0.sample(disk_chart, radial_bump_2d((0.0, 0.0), 0.5, 1.0)[0])
        data = xray_transform(disk_chart, f, None, dense_rays)
        res = invert_transform(data, dense_rays, disk_chart)
        d = res.diagnostics
        assert d["condition_estimate"] >= 1.0
        assert d["data_residual"] < 0.2
        assert d["n_rays"] == dense_rays.n_rays

    def test_attenuated_round_trip_small_lambda(self, disk_chart, dense_rays):
        f_fn, _, _ = radial_bump_2d((0.0, 0.0), 0.55, 1.0)
        f = ScalarField0.sample(disk_chart, f_fn)
        lam = 0.8
        data = attenuated_transform(disk_chart, f, None, dense_rays, lam)
        res = invert_transform(data, dense_rays, disk_chart,
                               mode=("attenuated", lam), function_only=True)
        rel = norm_scalar(ScalarField0(disk_chart, res.f.values - f.values)) / norm_scalar(f)
        assert rel <= 0.05

    def test_fbp_cross_check(self, disk_chart, dense_rays):
        f_fn, _, _ = radial_bump_2d((0.05, 0.0), 0.55, 1.0)
        f = ScalarField0.sample(disk_chart, f_fn)
        rec_fbp = fbp_disk(disk_chart, f)
        data = xray_transform(disk_chart, f, None, dense_rays)
        rec_lsq = invert_transform(data, dense_rays, disk_chart).f
        nodes = disk_chart.chart_nodes()
        inside = np.hypot(nodes[..., 0], nodes[..., 1]) < 0.85
        ref = np.real(f.values)
        e_fbp = np.linalg.norm((np.real(rec_fbp.values) - ref)[inside])
        e_lsq = np.linalg.norm((np.real(rec_lsq.values) - ref)[inside])
        nrm = np.linalg.norm(ref[inside])
        assert e_fbp / nrm <= 0.08
        assert e_lsq / nrm <= 0.05
        # the two independent reconstructions agree with each other
        agree = np.linalg.norm((np.real(rec_fbp.values) - np.real(rec_lsq.values))[inside])
        assert agree / nrm <= 0.10
