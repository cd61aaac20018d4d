"""Serialization: CSV dumps, PGM rasters with sidecar scaling, manifests."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .forms import (OneForm0, OneForm3, ScalarField0, ScalarField3, TwoForm3,
                    edge_lattices_2d, lattice_points_2d, node_lattice_2d,
                    x1_midpoints)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_scalar0_csv(path, field: ScalarField0) -> None:
    chart = field.chart
    nodes = chart.chart_nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "re", "im"])
        for i in range(chart.n2):
            for j in range(chart.n3):
                v = field.values[i, j]
                w.writerow([i, j, _fmt(nodes[i, j, 0]), _fmt(nodes[i, j, 1]),
                            _fmt(v.real), _fmt(v.imag)])


def write_scalar3_csv(path, field: ScalarField3) -> None:
    chart = field.chart
    x1 = chart.x1_axis
    nodes = chart.chart_nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "i", "j", "x1", "x", "y", "re", "im"])
        for k in range(chart.n1):
            for i in range(chart.n2):
                for j in range(chart.n3):
                    v = field.values[k, i, j]
                    w.writerow([k, i, j, _fmt(x1[k]), _fmt(nodes[i, j, 0]),
                                _fmt(nodes[i, j, 1]), _fmt(v.real), _fmt(v.imag)])


def write_oneform3_csv(path, form: OneForm3) -> None:
    chart = form.chart
    xm = x1_midpoints(chart)
    xn = chart.x1_axis
    nodes = chart.chart_nodes()
    e1, e2 = edge_lattices_2d(chart)
    p1 = lattice_points_2d(*e1)
    p2 = lattice_points_2d(*e2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "k", "i", "j", "x1", "x", "y", "re", "im"])
        for k in range(chart.n1 - 1):
            for i in range(chart.n2):
                for j in range(chart.n3):
                    v = form.c1[k, i, j]
                    w.writerow([1, k, i, j, _fmt(xm[k]), _fmt(nodes[i, j, 0]),
                                _fmt(nodes[i, j, 1]), _fmt(v.real), _fmt(v.imag)])
        for k in range(chart.n1):
            for i in range(chart.n2 - 1):
                for j in range(chart.n3):
                    v = form.c2[k, i, j]
                    w.writerow([2, k, i, j, _fmt(xn[k]), _fmt(p1[i, j, 0]),
                                _fmt(p1[i, j, 1]), _fmt(v.real), _fmt(v.imag)])
        for k in range(chart.n1):
            for i in range(chart.n2):
                for j in range(chart.n3 - 1):
                    v = form.c3[k, i, j]
                    w.writerow([3, k, i, j, _fmt(xn[k]), _fmt(p2[i, j, 0]),
                                _fmt(p2[i, j, 1]), _fmt(v.real), _fmt(v.imag)])


def write_sinogram_csv(path, sino) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "ray_id", "re", "im"])
        for m, lam in enumerate(sino.lambda_grid):
            for r in range(sino.values.shape[1]):
                v = sino.values[m, r]
                w.writerow([_fmt(lam), r, _fmt(v.real), _fmt(v.imag)])


def write_rays_csv(path, rays) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ray_id", "x", "y", "xi_x", "xi_y", "tau", "nontangential"])
        for r in range(rays.n_rays):
            w.writerow([r, _fmt(rays.x0[r, 0]), _fmt(rays.x0[r, 1]),
                        _fmt(rays.xi0[r, 0]), _fmt(rays.xi0[r, 1]),
                        _fmt(rays.tau[r]), 1])


def write_pgm(path, values: np.ndarray, bits: int = 16) -> None:
    """Magnitude heatmap as binary PGM with a sidecar recording the scaling."""
    mag = np.abs(np.asarray(values))
    vmin = float(mag.min())
    vmax = float(mag.max())
    maxval = (1 << bits) - 1
    if vmax > vmin:
        scaled = np.round((mag - vmin) / (vmax - vmin) * maxval)
    else:
        scaled = np.zeros_like(mag)
    n, m = mag.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m} {n}\n{maxval}\n".encode("ascii"))
        if bits == 8:
            fh.write(scaled.astype(">u1").tobytes())
        else:
            fh.write(scaled.astype(">u2").tobytes())
    side = path.with_suffix(path.suffix + ".scale.txt")
    with open(side, "w") as fh:
        fh.write(f"shape = {n} {m}\n")
        fh.write(f"bits = {bits}\n")
        fh.write(f"value_min = {_fmt(vmin)}\n")
        fh.write(f"value_max = {_fmt(vmax)}\n")
        fh.write("mapping = linear magnitude -> [0, maxval]\n")


def write_report(path, report) -> None:
    with open(path, "w") as fh:
        for line in report.summary_lines():
            fh.write(line + "\n")


def write_check_lines(path, checks: list[tuple[str, float, float, bool]]) -> None:
    """Named checks: (name, value, tolerance, passed)."""
    with open(path, "w") as fh:
        for name, value, tol, ok in checks:
            status = "PASS" if ok else "FAIL"
            fh.write(f"{status} {name}: value = {value:.6e}, tolerance = {tol:.6e}\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, filenames) -> Path:
    """Hash manifest over every produced file, itself excluded."""
    directory = Path(directory)
    out = directory / "manifest.txt"
    with open(out, "w") as fh:
        for name in sorted(filenames):
            digest = sha256_file(directory / name)
            fh.write(f"{digest}  {name}\n")
    return out
