#!/usr/bin/env python3
"""Element maps F and the exact map Psi."""

import numpy as np
import pytest

from curvedhz.curving import (build_curved_mesh, build_exact_map, curved_edge_nodes, edge_gap_extension,
                              geometric_report, lagrange_basis, lagrange_nodes, map_eval)
from curvedhz.errors import CurvingError
from curvedhz.mesh import generate_disk_mesh, uniform_refine
from curvedhz.quadrature import triangle_rule


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_lagrange_partition_of_unity(m, rng):
    pts = rng.dirichlet([1, 1, 1], size=30)[:, 1:]
    N, dx, dy = lagrange_basis(m, pts)
    assert np.allclose(N.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(dx.sum(axis=1), 0.0, atol=1e-10)
    N_nodes, _, _ = lagrange_basis(m, lagrange_nodes(m))
    assert np.allclose(N_nodes, np.eye(len(lagrange_nodes(m))), atol=1e-10)
    assert len(curved_edge_nodes(m)) == m + 1


def test_order_guard(disk, circle):
    with pytest.raises(CurvingError):
        build_curved_mesh(disk, circle, 0)
    with pytest.raises(CurvingError):
        build_curved_mesh(disk, circle, 6)


def test_straight_geometry_is_identity(disk, circle):
    cm = build_curved_mesh(disk, circle, 1)
    assert all(fm.is_identity for fm in cm.maps)
    assert len(cm.boundary_triangles) > 0
    assert set(cm.edge_params) == set(cm.boundary_triangles.tolist())


@pytest.mark.parametrize("m", [2, 3, 4])
def test_curved_edge_on_chart(disk, circle, m):
    cm = build_curved_mesh(disk, circle, m)
    s = np.linspace(0, 1, 7)
    for t in cm.boundary_triangles:
        fm = cm.maps[t]
        assert not fm.is_identity
        F, _, det = fm.evaluate(np.column_stack([1 - s, s]))
        t0, t1 = cm.edge_params[t]
        nodes = fm.control_points[curved_edge_nodes(m)]
        assert np.allclose(np.linalg.norm(nodes, axis=1), 1.0, atol=1e-14)
        assert np.all(det > 0)
        # local vertices 1 and 2 carry the chart parameters of the curved edge
        assert np.allclose(F[0], circle.point(t0), atol=1e-14)
        assert np.allclose(F[-1], circle.point(t1), atol=1e-14)


def test_jacobians_match_finite_differences(curved_disk, rng):
    cm, exact = curved_disk
    pts = rng.dirichlet([2, 2, 2], size=12)[:, 1:]
    d = 1e-6
    for t in cm.boundary_triangles[:5]:
        fm = cm.maps[t]
        _, JF, _ = fm.evaluate(pts)
        G, JG, JPsi, detPsi = exact.evaluate(int(t), pts)
        for r in range(2):
            e = np.zeros(2)
            e[r] = d
            fd_F = (fm.evaluate(pts + e)[0] - fm.evaluate(pts - e)[0]) / (2 * d)
            fd_G = (exact.evaluate(int(t), pts + e)[0] - exact.evaluate(int(t), pts - e)[0]) / (2 * d)
            assert np.allclose(fd_F, JF[:, :, r], rtol=1e-6, atol=1e-8)
            assert np.allclose(fd_G, JG[:, :, r], rtol=1e-6, atol=1e-8)
        assert np.allclose(JPsi @ JF, JG, atol=1e-12)
        assert np.allclose(detPsi, np.linalg.det(JPsi), atol=1e-12)


def test_exact_map_hits_the_chart(curved_disk, circle):
    cm, exact = curved_disk
    s = np.linspace(0.0, 1.0, 9)
    for t in cm.boundary_triangles:
        G = exact.evaluate(int(t), np.column_stack([1 - s, s]))[0]
        assert np.allclose(np.linalg.norm(G, axis=1), 1.0, atol=1e-13)
        # straight edges and the opposite vertex stay put
        F_side = cm.maps[t].evaluate(np.column_stack([np.zeros(5), np.linspace(0, 1, 5)]))[0]
        G_side = exact.evaluate(int(t), np.column_stack([np.zeros(5), np.linspace(0, 1, 5)]))[0]
        assert np.allclose(F_side, G_side, atol=1e-14)


def test_exact_map_identity_inside(curved_disk):
    cm, exact = curved_disk
    pts = triangle_rule(4).points
    for t in cm.interior_triangles[:3]:
        G, _, JPsi, detPsi = exact.evaluate(int(t), pts)
        assert np.allclose(G, cm.maps[t].evaluate(pts)[0])
        assert np.allclose(JPsi, np.eye(2))
        assert np.allclose(detPsi, 1.0)


def test_edge_gap_extension_vanishes_on_straight_edges(rng):
    nodes = lagrange_nodes(3)
    edge = curved_edge_nodes(3)
    s = nodes[edge, 1]
    gap = rng.normal(size=(4, 2))
    gap[[0, -1]] = 0.0
    shift = edge_gap_extension(nodes, s, gap)
    assert np.allclose(shift[edge], gap, atol=1e-14)
    straight = (nodes[:, 0] < 1e-12) | (nodes[:, 1] < 1e-12)
    assert np.allclose(shift[straight], 0.0)
    # centroid node: xi * eta * q(1/3) with q(1/3) = gap(1/3) / (2/9)
    centroid = int(np.flatnonzero(np.all(np.isclose(nodes, 1.0 / 3.0), axis=1))[0])
    assert np.allclose(shift[centroid], 0.5 * gap[1], atol=1e-14)


def _cubic_part(cm) -> float:
    """max over boundary elements of |F(c) - I_2 F(c)| at the centroid."""
    c = np.array([[1.0 / 3.0, 1.0 / 3.0]])
    N2 = lagrange_basis(2, c)[0]
    out = 0.0
    for t in cm.boundary_triangles:
        fm = cm.maps[t]
        F_nodes = fm.evaluate(lagrange_nodes(2))[0]
        out = max(out, float(np.linalg.norm(fm.evaluate(c)[0][0] - (N2 @ F_nodes)[0])))
    return out


def test_cubic_map_part_scales_like_h3(circle):
    coarse = uniform_refine(generate_disk_mesh(circle, 0.5), circle)
    fine = uniform_refine(coarse, circle)
    ratio = _cubic_part(build_curved_mesh(coarse, circle, 3)) / _cubic_part(build_curved_mesh(fine, circle, 3))
    assert ratio >= 6.0


def test_single_ring_mesh_curves(circle):
    coarse = generate_disk_mesh(circle, 1.0)
    # six boundary triangles spanning 60 degrees of arc each
    cm = build_curved_mesh(coarse, circle, 2)
    assert len(cm.boundary_triangles) == 6
    assert len(cm.interior_triangles) == 0


def test_two_boundary_edges_rejected(circle):
    from curvedhz.mesh import Triangulation

    verts = circle.point(np.array([0.0, 2.0, 4.0]))
    tri = Triangulation(verts, np.array([[0, 1, 2]]), {0: 0.0, 1: 2.0, 2: 4.0}, "circle")
    with pytest.raises(CurvingError):
        build_curved_mesh(tri, circle, 2)


def test_geometric_slopes(circle):
    base = generate_disk_mesh(circle, 0.5)
    report = geometric_report(circle, base, [1, 2, 3], n_refinements=3)
    assert len(report.rows) == 12
    for m in (1, 2, 3):
        assert report.slopes_Psi[m] == pytest.approx(m + 1, abs=0.3)
    for row in report.rows:
        if row.m == 1:
            assert row.sup_F_minus_I == 0.0


def test_map_eval_on_affine_element(disk, circle):
    cm = build_curved_mesh(disk, circle, 3)
    t = int(cm.interior_triangles[0])
    pts = triangle_rule(3).points
    F, JF, det = map_eval(cm.maps[t], pts)
    assert np.allclose(F, cm.maps[t].affine(pts), atol=1e-14)
    assert np.allclose(JF, cm.maps[t].affine_jacobian, atol=1e-14)
    assert np.allclose(det, np.linalg.det(cm.maps[t].affine_jacobian))


def test_three_leaf_mesh_curves(three_leaf_mesh, three_leaf):
    cm = build_curved_mesh(three_leaf_mesh, three_leaf, 2)
    assert len(cm.boundary_triangles) == 30
    pts = triangle_rule(6).points
    for t in cm.boundary_triangles:
        assert np.all(cm.maps[t].evaluate(pts)[2] > 0)
