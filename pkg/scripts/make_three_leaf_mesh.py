#!/usr/bin/env python3
"""
Generate the graded three-leaf starting mesh.

Two meshers:
- layered (default): rings of vertices on scaled copies of the chart,
  stitched ring to ring. Spacing along each ring follows arc length weighted
  by 1 + CONCAVE_GRADING * max(0, -curvature), so the concave corners get
  shorter edges. No triangle has three boundary vertices or two boundary
  edges. meshes/three_leaf_0.msh was produced this way with --h 0.3.
- gmsh: Frontal-Delaunay through the gmsh Python API (requirements-full.txt),
  with the boundary polygon sampled on the chart.

    python3 scripts/make_three_leaf_mesh.py --h 0.3 --out meshes/three_leaf_0.msh
"""

import argparse
import logging
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from curvedhz.geometry import make_builtin_chart  # noqa: E402
from curvedhz.mesh import Triangulation, read_gmsh, validate_mesh, write_gmsh  # noqa: E402

logger = logging.getLogger(__name__)

CONCAVE_GRADING = 0.2
DENSE_SAMPLES = 4000
MIN_RING_SIZE = 6


# ============================================================================
# LAYERED MESHER
# ============================================================================

def graded_arclength(chart):
    """Parameters t_0..t_M and the cumulative curvature-weighted arc length."""
    M = DENSE_SAMPLES
    t = chart.start + chart.period * np.arange(-1, M + 2) / M
    p = chart.point(t)
    a = p[1:-1] - p[:-2]
    b = p[2:] - p[1:-1]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    kappa = 2.0 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) / (la * lb * (la + lb))
    weight = 1.0 + CONCAVE_GRADING * np.maximum(0.0, -kappa)
    cum = np.concatenate([[0.0], np.cumsum((lb * weight)[:M])])
    return t[1:M + 2], cum


def _stitch(inner: np.ndarray, outer: np.ndarray, f_inner: np.ndarray, f_outer: np.ndarray):
    """Triangles between two closed rings, advancing whichever ring's next fraction is smaller."""
    na, nb = len(inner), len(outer)
    tris = []
    a = b = 0
    while a < na or b < nb:
        fa = f_inner[a + 1] if a + 1 < na else 1.0
        fb = f_outer[b + 1] if b + 1 < nb else 1.0
        if b >= nb or (a < na and fa <= fb):
            tris.append((inner[a], outer[b % nb], inner[(a + 1) % na]))
            a += 1
        else:
            tris.append((inner[a % na], outer[b], outer[(b + 1) % nb]))
            b += 1
    return tris


def layered_mesh(chart, h: float) -> Triangulation:
    t, cum = graded_arclength(chart)
    total = float(cum[-1])
    n_rings = max(2, int(1.0 / h + 0.5))

    vertices = [np.zeros((1, 2))]
    rings, fractions = [], []
    start = 1
    for j in range(1, n_rings + 1):
        rho = j / n_rings
        n = max(MIN_RING_SIZE, int(rho * total / h + 0.5))
        f = np.arange(n) / n
        pts = chart.point(np.interp(f * total, cum, t))
        vertices.append(pts if j == n_rings else rho * pts)
        rings.append(np.arange(start, start + n))
        fractions.append(f)
        start += n

    first = rings[0]
    tris = [(0, first[i], first[(i + 1) % len(first)]) for i in range(len(first))]
    for j in range(1, n_rings):
        tris.extend(_stitch(rings[j - 1], rings[j], fractions[j - 1], fractions[j]))
    return Triangulation(np.vstack(vertices), np.array(tris, dtype=np.int64))


def build_layered(h: float, out: str) -> int:
    mesh = layered_mesh(make_builtin_chart("three_leaf"), h)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w") as f:
        f.write(write_gmsh(mesh))
    return _check(out)


# ============================================================================
# GMSH MESHER
# ============================================================================

def boundary_polygon(h: float):
    chart = make_builtin_chart("three_leaf")
    t, pts = chart.samples()
    perimeter = float(np.sum(np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)))
    n = max(12, int(round(perimeter / h)))
    params = np.linspace(chart.start, chart.end, n, endpoint=False)
    return params, chart.point(params)


def point_sizes(pts: np.ndarray, h: float) -> np.ndarray:
    prev = pts - np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0) - pts
    turn = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    # counter-clockwise polygon: right turns are concave
    return np.where(turn < 0, h / (1.0 + 10.0 * CONCAVE_GRADING), h)


def build_gmsh(h: float, out: str, version: float) -> int:
    import gmsh

    _, pts = boundary_polygon(h)
    sizes = point_sizes(pts, h)

    gmsh.initialize()
    gmsh.option.setNumber("General.Terminal", 0)
    gmsh.model.add("three_leaf")
    tags = [gmsh.model.geo.addPoint(float(x), float(y), 0.0, float(s)) for (x, y), s in zip(pts, sizes)]
    lines = [gmsh.model.geo.addLine(tags[i], tags[(i + 1) % len(tags)]) for i in range(len(tags))]
    loop = gmsh.model.geo.addCurveLoop(lines)
    surface = gmsh.model.geo.addPlaneSurface([loop])
    gmsh.model.geo.synchronize()
    for line in lines:
        gmsh.model.mesh.setTransfiniteCurve(line, 2)
    boundary = gmsh.model.addPhysicalGroup(1, lines)
    gmsh.model.setPhysicalName(1, boundary, "boundary")
    domain = gmsh.model.addPhysicalGroup(2, [surface])
    gmsh.model.setPhysicalName(2, domain, "domain")

    gmsh.option.setNumber("Mesh.Algorithm", 6)  # Frontal-Delaunay
    gmsh.option.setNumber("Mesh.MshFileVersion", version)
    gmsh.model.mesh.generate(2)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    gmsh.write(out)
    gmsh.finalize()
    return _check(out)


def _check(out: str) -> int:
    with open(out, "rb") as f:
        mesh = read_gmsh(f.read(), make_builtin_chart("three_leaf"))
    report = validate_mesh(mesh)
    logger.info(f"Wrote {out}: {report.n_triangles} triangles, h={report.h:.4f}, "
                f"min angle {report.min_angle:.1f} deg")
    if report.degenerate_triangles:
        logger.error(f"{len(report.degenerate_triangles)} triangles with nonpositive area")
        return 1
    if not report.boundary_shape_ok:
        logger.error(f"{len(report.offending_triangles)} triangles touch the boundary with three vertices "
                     f"or two edges; try a smaller --h")
        return 1
    return 0


def main():
    parser = argparse.ArgumentParser(description="Generate the graded three-leaf Gmsh mesh")
    parser.add_argument("--h", type=float, default=0.3, help="boundary spacing away from concave corners")
    parser.add_argument("--out", default="meshes/three_leaf_0.msh")
    parser.add_argument("--mesher", choices=["layered", "gmsh"], default="layered")
    parser.add_argument("--version", type=float, default=4.1, choices=[2.2, 4.1], help="MSH version (gmsh only)")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s [%(levelname)s] %(message)s')
    if args.mesher == "layered":
        return build_layered(args.h, args.out)
    try:
        import gmsh  # noqa: F401
    except ImportError:
        logger.error("gmsh is not installed: pip install -r requirements-full.txt")
        return 1
    return build_gmsh(args.h, args.out, args.version)


if __name__ == "__main__":
    sys.exit(main())
