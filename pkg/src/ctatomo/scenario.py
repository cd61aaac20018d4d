"""Scenario files: flat sectioned key-value configuration and pipelines.

A scenario fixes the geometry, the analytic phantoms, the ray family, the
frequency grid, the pipeline to run, and tolerance overrides.  Runs are
deterministic for a fixed file and seed; every produced file lands in the
manifest with its content hash, and the exit status reflects the named
checks of the executed pipeline.
"""

from __future__ import annotations

import configparser
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as tio
from . import phantoms as ph
from .errors import ValidationError
from .forms import exterior_d
from .manifold import DiskDomain, MetricChart, SquareDomain, sample_inflow_boundary
from .recovery import (RecoveryReport, certify_uniqueness, default_lambda_grid,
                       fourier_reduce, reconstruct_dA, reconstruct_q,
                       sinogram_reversal_defect, synthesize_data,
                       synthesize_q_data)

PIPELINES = ("synthesize", "certify", "reconstruct-dA", "reconstruct-q",
             "forward-check", "all")
MAGNETIC_PHANTOMS = ("coulomb_bump", "gradient_bump")
ELECTRIC_PHANTOMS = ("bump",)
METRICS = ("euclidean", "conformal_bump", "constant")
CONFORMAL_FACTORS = ("one", "bump")

_SCHEMA = {
    "geometry": {
        "domain": ("disk", str), "radius": (1.0, float), "side": (2.0, float),
        "metric": ("euclidean", str),
        "metric_bump_amplitude": (0.12, float), "metric_bump_width": (0.7, float),
        "constant_g11": (1.0, float), "constant_g12": (0.0, float),
        "constant_g22": (1.0, float),
        "conformal_factor": ("one", str),
        "conformal_factor_amplitude": (0.2, float),
        "conformal_factor_x1_width": (1.6, float),
        "conformal_factor_chart_width": (0.8, float),
        "x1_half_extent": (4.0, float),
        "n_x1": (33, int), "n_chart_1": (32, int), "n_chart_2": (32, int),
    },
    "phantoms": {
        "magnetic": ("coulomb_bump", str),
        "magnetic_amplitude": (1.0, float),
        "magnetic_axial_amplitude": (1.0, float),
        "magnetic_x1_width": (1.8, float),
        "magnetic_chart_width": (0.7, float),
        "gradient_x1_center": (0.4, float),
        "gradient_chart_width": (0.68, float),
        "electric": ("bump", str),
        "electric_amplitude": (1.0, float),
        "electric_x1_width": (1.8, float),
        "electric_chart_width": (0.65, float),
        "gauge_amplitude": (0.6, float),
        "gauge_x1_width": (1.2, float),
        "support_margin": (0.5, float),
        "seed": (7, int),
    },
    "rays": {
        "boundary_points": (96, int), "directions": (48, int),
        "tangency_threshold": (1e-3, float), "step": (0.0, float),
    },
    "lambda": {
        "count": (17, int), "max": (0.0, float),
    },
    "pipeline": {
        "mode": ("all", str), "workers": (1, int),
    },
    "tolerances": {
        "scale": (1.0, float),
        "vanishing_rel": (1e-4, float),
        "certify_dphi_rel": (0.10, float),
        "certify_boundary_rel": (1e-3, float),
        "reconstruct_da_rel": (0.15, float),
        "reconstruct_q_rel": (0.10, float),
        "gauge_invariance_factor": (2.0, float),
        "reversal_symmetry": (1e-4, float),
        "slice_conjugate_symmetry": (1e-10, float),
        "forward_gauge_order": (1.8, float),
    },
    "output": {
        "directory": ("out", str),
    },
}


@dataclass
class Scenario:
    values: dict
    path: str = ""

    def __getitem__(self, key: tuple[str, str]):
        return self.values[key[0]][key[1]]

    def get(self, section: str, key: str):
        return self.values[section][key]


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; collect every error at once."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except configparser.Error as exc:
        raise ValidationError([f"parse error: {exc}"])

    errors: list[str] = []
    values: dict = {}
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (default, typ) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = typ(raw)
                except ValueError:
                    errors.append(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}")
                    values[section][key] = default
            else:
                values[section][key] = default
    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key {section}.{key}")

    sc = Scenario(values=values, path=str(path))
    errors.extend(validate_scenario(sc))
    if errors:
        raise ValidationError(errors)
    return sc


def validate_scenario(sc: Scenario) -> list[str]:
    """Cross-reference and range checks; returns one message per problem."""
    errors = []
    g = sc.values["geometry"]
    p = sc.values["phantoms"]
    r = sc.values["rays"]
    lam = sc.values["lambda"]
    pipe = sc.values["pipeline"]
    tol = sc.values["tolerances"]

    if g["domain"] not in ("disk", "square"):
        errors.append("geometry.domain: must be 'disk' or 'square'")
    if g["metric"] not in METRICS:
        errors.append(f"geometry.metric: unknown metric {g['metric']!r}")
    if g["conformal_factor"] not in CONFORMAL_FACTORS:
        errors.append("geometry.conformal_factor: must be 'one' or 'bump'")
    for key in ("radius", "side", "x1_half_extent"):
        if g[key] <= 0:
            errors.append(f"geometry.{key}: must be positive")
    for key in ("n_x1", "n_chart_1", "n_chart_2"):
        if g[key] < 4:
            errors.append(f"geometry.{key}: resolution must be at least 4")

    if p["magnetic"] not in MAGNETIC_PHANTOMS:
        errors.append(f"phantoms.magnetic: unknown phantom {p['magnetic']!r}")
    if p["electric"] not in ELECTRIC_PHANTOMS:
        errors.append(f"phantoms.electric: unknown phantom {p['electric']!r}")
    a = g["x1_half_extent"]
    margin = p["support_margin"]
    for key in ("magnetic_x1_width", "electric_x1_width", "gauge_x1_width"):
        center = p["gradient_x1_center"] if key == "magnetic_x1_width" else 0.0
        extent = abs(center) + p[key] * (1.15 if key == "magnetic_x1_width" else 1.0)
        if extent > a - margin:
            errors.append(
                f"phantoms.{key}: axial support [{-extent:.3g}, {extent:.3g}] "
                f"violates the compact-support margin {margin:.3g} inside "
                f"(-{a:.3g}, {a:.3g})")

    if r["boundary_points"] < 1 or r["directions"] < 1:
        errors.append("rays.boundary_points and rays.directions must be at least 1")
    if r["tangency_threshold"] <= 0:
        errors.append("rays.tangency_threshold: must be positive")

    if lam["count"] < 3 or lam["count"] % 2 == 0:
        errors.append("lambda.count: must be an odd count of at least 3")
    if pipe["mode"] not in PIPELINES:
        errors.append(f"pipeline.mode: unknown pipeline {pipe['mode']!r}")
    if pipe["workers"] < 1:
        errors.append("pipeline.workers: must be at least 1")
    for key, val in tol.items():
        if val <= 0:
            errors.append(f"tolerances.{key}: must be positive")
    return errors


# ---------------------------------------------------------------------------
# scenario realization

def build_chart(sc: Scenario) -> MetricChart:
    g = sc.values["geometry"]
    domain = DiskDomain(g["radius"]) if g["domain"] == "disk" else SquareDomain(g["side"])
    kw = dict(n1=g["n_x1"], n2=g["n_chart_1"], n3=g["n_chart_2"],
              x1_half=g["x1_half_extent"])
    if g["metric"] == "euclidean":
        chart = MetricChart.euclidean(domain, **kw)
    elif g["metric"] == "constant":
        m = np.array([[g["constant_g11"], g["constant_g12"]],
                      [g["constant_g12"], g["constant_g22"]]])
        chart = MetricChart.constant(m, domain, **kw)
    else:
        amp = g["metric_bump_amplitude"]
        w = g["metric_bump_width"]
        u = lambda pts: amp * np.exp(-(pts[..., 0] ** 2 + pts[..., 1] ** 2) / w**2)
        chart = MetricChart.conformal_metric(u, domain, **kw)
    if g["conformal_factor"] == "bump":
        conf = ph.bump_conformal_factor(g["conformal_factor_amplitude"],
                                        g["conformal_factor_x1_width"],
                                        g["conformal_factor_chart_width"])
        chart.conformal = lambda x1, pts: np.broadcast_to(
            conf(x1, pts), np.broadcast_shapes(np.shape(x1), pts.shape[:-1])).copy()
        chart._conformal_struct = conf
    chart.validate()
    return chart


def conformal_struct(sc: Scenario, chart: MetricChart):
    return getattr(chart, "_conformal_struct", None)


def build_rays(sc: Scenario, chart: MetricChart):
    r = sc.values["rays"]
    step = r["step"] if r["step"] > 0 else None
    return sample_inflow_boundary(chart, r["boundary_points"], r["directions"],
                                  eps_tan=r["tangency_threshold"], step=step)


def build_lambda(sc: Scenario, chart: MetricChart) -> np.ndarray:
    lam = sc.values["lambda"]
    if lam["max"] > 0:
        n = lam["count"]
        return np.linspace(-lam["max"], lam["max"], n)
    return default_lambda_grid(chart, lam["count"])


def magnetic_phantom(sc: Scenario, chart: MetricChart):
    p = sc.values["phantoms"]
    if p["magnetic"] == "coulomb_bump":
        return ph.coulomb_phantom(chart, amplitude=p["magnetic_amplitude"],
                                  x1_width=p["magnetic_x1_width"],
                                  chart_width=p["magnetic_chart_width"],
                                  axial_amplitude=p["magnetic_axial_amplitude"])
    phi0, A = ph.gradient_phantom(chart, amplitude=p["magnetic_amplitude"],
                                  x1_width=p["magnetic_x1_width"],
                                  chart_width=p["gradient_chart_width"],
                                  x1_center=p["gradient_x1_center"])
    return A


def gradient_reference(sc: Scenario, chart: MetricChart):
    p = sc.values["phantoms"]
    return ph.gradient_phantom(chart, amplitude=p["magnetic_amplitude"],
                               x1_width=p["magnetic_x1_width"],
                               chart_width=p["gradient_chart_width"],
                               x1_center=p["gradient_x1_center"])


def electric_reference(sc: Scenario, chart: MetricChart):
    p = sc.values["phantoms"]
    return ph.electric_phantom(chart, amplitude=p["electric_amplitude"],
                               x1_width=p["electric_x1_width"],
                               chart_width=p["electric_chart_width"])


# ---------------------------------------------------------------------------
# pipeline execution

@dataclass
class RunResult:
    checks: list = field(default_factory=list)   # (name, value, tol, passed)
    files: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, _, _, ok in self.checks)

    def add_check(self, name: str, value: float, tol: float, lower_is_pass=True):
        ok = (value <= tol) if lower_is_pass else (value >= tol)
        self.checks.append((name, float(value), float(tol), bool(ok)))


def _oneform_sup(A) -> float:
    return max(np.max(np.abs(A.c1)), np.max(np.abs(A.c2)), np.max(np.abs(A.c3)))


def run_scenario(sc: Scenario, out_dir=None) -> RunResult:
    """Execute the selected pipeline and write every artifact plus manifest."""
    out = Path(out_dir if out_dir is not None else sc.get("output", "directory"))
    out.mkdir(parents=True, exist_ok=True)
    mode = sc.get("pipeline", "mode")
    workers = sc.get("pipeline", "workers")
    tol = sc.values["tolerances"]
    tol_scale = tol["scale"]

    result = RunResult()
    chart = build_chart(sc)
    rays = build_rays(sc, chart)
    lam = build_lambda(sc, chart)

    def emit(name, writer, *args):
        writer(out / name, *args)
        result.files.append(name)
        side = Path(name + ".scale.txt")
        if (out / side).exists() and writer is tio.write_pgm:
            result.files.append(str(side))

    emit("rays.csv", tio.write_rays_csv, rays)

    want = lambda *names: mode in names or mode == "all"

    if want("synthesize", "certify", "reconstruct-dA"):
        A = magnetic_phantom(sc, chart)
        D = synthesize_data(A, rays, lam)
        emit("sinogram_magnetic.csv", tio.write_sinogram_csv, D)
        emit("sinogram_magnetic.pgm", tio.write_pgm, np.abs(D.values).T)
        slices = fourier_reduce(A, lam)
        result.add_check("slice_conjugate_symmetry",
                         slices.conjugate_symmetry_defect(),
                         tol["slice_conjugate_symmetry"] * tol_scale)
        defect, n_pairs = sinogram_reversal_defect(D, rays)
        if n_pairs > 0:
            result.add_check("sinogram_reversal_symmetry", defect,
                             tol["reversal_symmetry"] * tol_scale)

    if want("synthesize", "reconstruct-q"):
        q = electric_reference(sc, chart)
        conf = conformal_struct(sc, chart)
        Dq = synthesize_q_data(q, conf, rays, lam)
        emit("sinogram_electric.csv", tio.write_sinogram_csv, Dq)
        emit("sinogram_electric.pgm", tio.write_pgm, np.abs(Dq.values).T)

    if want("certify"):
        phi0, A_grad = gradient_reference(sc, chart)
        D_grad = synthesize_data(A_grad, rays, lam)
        A_grid = A_grad.to_grid()
        scale = _oneform_sup(A_grid)
        diam = float(np.hypot(2 * chart.x1_half, chart.domain.diameter))
        vanish_tol = tol["vanishing_rel"] * scale * diam * tol_scale
        result.add_check("vanishing_data", float(np.max(np.abs(D_grad.values))),
                         vanish_tol)
        rep = certify_uniqueness(D_grad, A_grad, rays, order_max=4,
                                 vanish_tol=vanish_tol)
        result.reports["certify"] = rep
        emit("certify_report.txt", tio.write_report, rep)
        emit("certify_phi.csv", tio.write_scalar3_csv, rep.fields["phi"])
        emit("certify_phi.pgm", tio.write_pgm,
             np.abs(rep.fields["phi"].values[chart.n1 // 2]))
        result.add_check("certify_dphi_rel", rep.metrics["dphi_vs_reference_rel"],
                         tol["certify_dphi_rel"] * tol_scale)
        result.add_check("certify_boundary_rel", rep.metrics["phi_boundary_sup_rel"],
                         tol["certify_boundary_rel"] * tol_scale)

    if want("reconstruct-dA"):
        A = magnetic_phantom(sc, chart)
        D = synthesize_data(A, rays, lam)
        dA, rep = reconstruct_dA(D, rays, chart, A_ref=A,
                                 symmetry_tol=tol["reversal_symmetry"] * tol_scale,
                                 workers=workers)
        result.reports["reconstruct-dA"] = rep
        emit("reconstruct_dA_report.txt", tio.write_report, rep)
        emit("A_reconstructed.csv", tio.write_oneform3_csv, rep.fields["A_rec"])
        emit("dA_c23_midslab.pgm", tio.write_pgm, np.abs(dA.c23[chart.n1 // 2]))
        for comp in ("c12", "c13", "c23"):
            result.add_check(f"reconstruct_dA_{comp}_rel",
                             rep.metrics[f"dA_{comp}_rel_l2"],
                             tol["reconstruct_da_rel"] * tol_scale)

        # gauge invariance of the output: rerun from the shifted phantom
        p = sc.values["phantoms"]
        p_pot, dp_terms = ph.gauge_shift_phantom(
            chart, amplitude=p["gauge_amplitude"], x1_width=p["gauge_x1_width"])
        A_shift = ph.add_gradient(A, p_pot, dp_terms)
        D2 = synthesize_data(A_shift, rays, lam)
        dA2, rep2 = reconstruct_dA(D2, rays, chart, A_ref=A,
                                   symmetry_tol=tol["reversal_symmetry"] * tol_scale,
                                   workers=workers)
        base = max(rep.metrics["dA_c12_rel_l2"], rep.metrics["dA_c13_rel_l2"],
                   rep.metrics["dA_c23_rel_l2"])
        worst_change = 0.0
        for comp in ("c12", "c13", "c23"):
            t = getattr(dA, comp)
            s = getattr(dA2, comp)
            worst_change = max(worst_change, float(
                np.linalg.norm(s - t) / max(np.linalg.norm(t), 1e-300)))
        result.add_check("gauge_invariance_change", worst_change,
                         tol["gauge_invariance_factor"] * base * tol_scale)

    if want("reconstruct-q"):
        q = electric_reference(sc, chart)
        conf = conformal_struct(sc, chart)
        Dq = synthesize_q_data(q, conf, rays, lam)
        q_rec, rep = reconstruct_q(Dq, rays, chart, c=conf, q_ref=q,
                                   workers=workers)
        result.reports["reconstruct-q"] = rep
        emit("reconstruct_q_report.txt", tio.write_report, rep)
        emit("q_reconstructed.csv", tio.write_scalar3_csv, q_rec)
        emit("q_midslab.pgm", tio.write_pgm, np.abs(q_rec.values[chart.n1 // 2]))
        result.add_check("reconstruct_q_rel", rep.metrics["q_rel_l2"],
                         tol["reconstruct_q_rel"] * tol_scale)

    if want("forward-check"):
        rep = forward_check(sc)
        result.reports["forward-check"] = rep
        emit("forward_check_report.txt", tio.write_report, rep)
        result.add_check("forward_flat_laplacian", rep.metrics["flat_laplacian_defect"],
                         1e-9 * tol_scale)
        result.add_check("forward_gauge_order", rep.metrics["gauge_neumann_order"],
                         tol["forward_gauge_order"] / tol_scale, lower_is_pass=False)

    emit("checks.txt", tio.write_check_lines, result.checks)
    manifest = tio.write_manifest(out, result.files)
    result.files.append(manifest.name)
    return result


def forward_check(sc: Scenario) -> RecoveryReport:
    """Operator sanity on the product box: flat exactness and gauge order."""
    from .schrodinger import ProductGrid, apply_operator, gauge_equiv_check

    g = sc.values["geometry"]
    rep = RecoveryReport(mode="forward-check")

    flat = MetricChart.euclidean(SquareDomain(2.0), n1=9, n2=9, n3=9, x1_half=1.0)
    grid = ProductGrid(flat)
    X, _, _ = grid.coordinates()
    out = apply_operator((X**2).astype(complex), None, None, grid)
    interior = grid.interior_mask()
    rep.metrics["flat_laplacian_defect"] = float(np.max(np.abs(out[interior] + 2.0)))

    errs = []
    for n in (17, 33):
        chart = MetricChart.conformal_metric(
            lambda p: 0.1 * p[..., 0] + 0.05 * p[..., 1] ** 2,
            SquareDomain(2.0), n1=n, n2=n, n3=n, x1_half=1.0)
        chart.conformal = lambda x1, pts: np.broadcast_to(
            1.0 + 0.2 * np.exp(-(x1**2 + pts[..., 0] ** 2 + pts[..., 1] ** 2) / 2.0),
            np.broadcast_shapes(np.shape(x1), pts.shape[:-1])).copy()
        pg = ProductGrid(chart)
        Xc, Yc, Zc = pg.coordinates()
        s = (Xc**2 + Yc**2 + Zc**2) / 0.8**2
        p_gauge = 0.3 * np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** 4, 0.0)
        bc = (np.exp(0.3 * Xc) * np.cos(0.7 * Yc) + 0.2j * Zc).astype(complex)
        q = np.full(pg.shape, 1.0, dtype=complex)
        report = gauge_equiv_check(None, q, p_gauge.astype(complex), bc, pg)
        errs.append(report["neumann_discrepancy"])
        rep.metrics[f"gauge_neumann_discrepancy_n{n}"] = report["neumann_discrepancy"]
        rep.metrics[f"gauge_interior_discrepancy_n{n}"] = report["interior_discrepancy"]
    rep.metrics["gauge_neumann_order"] = float(np.log2(errs[0] / errs[1]))
    return rep
