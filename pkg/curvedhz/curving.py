"""
Curved element maps.

Boundary triangles are stored with local vertex 0 off the boundary, so local
edge 0 (opposite vertex 0) is the curved edge, parametrized on the reference
element by xi(s) = (1 - s, s).

- F_K^m (CurvedElementMap): degree-m Lagrange map; the edge-0 nodes sit on
  the chart at uniform parameter spacing between the endpoint parameters. The
  edge gap g(s) (chart minus chord) is carried into the element as
  xi * eta * q(eta) with g(s) = s (1 - s) q(s), deg q = m - 2, which is zero
  on the straight edges 1 and 2 and keeps |F|_j = O(h^j).
- Psi (ExactMap): transfinite blend carrying K^m onto the exactly curved
  triangle, G(xi) = F(xi) + (xi + eta) * delta(s), s = eta / (xi + eta),
  delta(s) = phi(t(s)) - F(1 - s, s). Jacobians are closed form.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CurvingError
from .geometry import BoundaryChart
from .mesh import Triangulation, uniform_refine
from .quadrature import edge_rule, error_degree, triangle_rule

logger = logging.getLogger(__name__)

MAX_GEOMETRIC_ORDER = 5


# ============================================================================
# REFERENCE LAGRANGE BASIS
# ============================================================================

def lagrange_nodes(m: int) -> np.ndarray:
    """Equispaced nodes (i/m, j/m), i + j <= m, ordered by j then i."""
    return np.array([(i / m, j / m) for j in range(m + 1) for i in range(m + 1 - j)])


def monomial_exponents(p: int) -> List[Tuple[int, int]]:
    return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]


def monomials(p: int, pts: np.ndarray):
    """Values and first derivatives of xi^a eta^b, a + b <= p. Shapes (n, N)."""
    xi, eta = pts[:, 0:1], pts[:, 1:2]
    exps = monomial_exponents(p)
    a = np.array([e[0] for e in exps])
    b = np.array([e[1] for e in exps])
    val = xi ** a * eta ** b
    dxi = np.where(a > 0, a * xi ** np.maximum(a - 1, 0), 0.0) * eta ** b
    deta = xi ** a * np.where(b > 0, b * eta ** np.maximum(b - 1, 0), 0.0)
    return val, dxi, deta


@lru_cache(maxsize=None)
def _lagrange_coefficients(m: int) -> np.ndarray:
    V, _, _ = monomials(m, lagrange_nodes(m))
    return np.linalg.inv(V)


@lru_cache(maxsize=64)
def _lagrange_table(m: int, key: bytes, n: int):
    pts = np.frombuffer(key).reshape(n, 2)
    C = _lagrange_coefficients(m)
    val, dxi, deta = monomials(m, pts)
    return val @ C, dxi @ C, deta @ C


def lagrange_basis(m: int, pts: np.ndarray):
    """Nodal basis values (n, N) and reference derivatives (n, N) x2."""
    pts = np.ascontiguousarray(pts, dtype=float)
    return _lagrange_table(m, pts.tobytes(), len(pts))


def curved_edge_nodes(m: int) -> np.ndarray:
    """Indices of the nodes on local edge 0, ordered by s = eta from 0 to 1."""
    nodes = lagrange_nodes(m)
    idx = [i for i, (x, y) in enumerate(nodes) if abs(x + y - 1.0) < 1e-12]
    return np.array(sorted(idx, key=lambda i: nodes[i, 1]))


# ============================================================================
# DATA MODEL
# ============================================================================

@dataclass
class CurvedElementMap:
    degree_m: int
    vertices: np.ndarray            # (3, 2) straight triangle, local order
    control_points: np.ndarray      # (N, 2) images of the Lagrange nodes
    is_identity: bool

    @property
    def affine_jacobian(self) -> np.ndarray:
        v = self.vertices
        return np.column_stack([v[1] - v[0], v[2] - v[0]])

    def affine(self, ref_pts) -> np.ndarray:
        ref_pts = np.atleast_2d(ref_pts)
        return self.vertices[0] + ref_pts @ self.affine_jacobian.T

    def evaluate(self, ref_pts):
        """F(xi), grad F(xi) (n, 2, 2) and det grad F(xi)."""
        ref_pts = np.atleast_2d(np.asarray(ref_pts, dtype=float))
        if self.is_identity:
            J = self.affine_jacobian
            jac = np.broadcast_to(J, (len(ref_pts), 2, 2)).copy()
            return self.affine(ref_pts), jac, np.full(len(ref_pts), np.linalg.det(J))
        N, dNx, dNy = lagrange_basis(self.degree_m, ref_pts)
        points = N @ self.control_points
        jac = np.stack([dNx @ self.control_points, dNy @ self.control_points], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        return points, jac, det


def map_eval(element_map: CurvedElementMap, ref_pts):
    return element_map.evaluate(ref_pts)


@dataclass
class CurvedMesh:
    base: Triangulation
    triangles: np.ndarray                   # (nt, 3) local vertex order, curved edge = local edge 0
    maps: List[CurvedElementMap]
    degree_m: int
    boundary_triangles: np.ndarray
    interior_triangles: np.ndarray
    edge_params: Dict[int, Tuple[float, float]] = field(default_factory=dict)   # element -> (t0, t1)
    chart: Optional[BoundaryChart] = None

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def local_edges(self, element: int) -> np.ndarray:
        """Global edge indices of local edges 0, 1, 2."""
        a, b, c = self.triangles[element]
        return np.array([self.base.edge_index(b, c), self.base.edge_index(a, c), self.base.edge_index(a, b)])

    def is_boundary(self, element: int) -> bool:
        return bool(self._boundary_mask[element])

    def __post_init__(self):
        self._boundary_mask = np.zeros(len(self.triangles), dtype=bool)
        self._boundary_mask[self.boundary_triangles] = True


def _rotate_to_curved_edge(mesh: Triangulation) -> Tuple[np.ndarray, List[int]]:
    tris = mesh.triangles.copy()
    boundary = []
    is_bedge = mesh.edge_triangles[:, 1] < 0
    for t in range(mesh.n_triangles):
        local = np.flatnonzero(is_bedge[mesh.triangle_edges[t]])
        if len(local) == 0:
            continue
        if len(local) > 1:
            raise CurvingError(f"triangle {t} has {len(local)} boundary edges; refine the mesh", element=t)
        i = int(local[0])
        tris[t] = np.roll(mesh.triangles[t], -i)
        boundary.append(t)
    return tris, boundary


def edge_gap_extension(nodes: np.ndarray, s: np.ndarray, gap: np.ndarray) -> np.ndarray:
    """Displacements xi * eta * q(eta) at the Lagrange nodes.

    `gap` holds chart minus chord at the edge-0 nodes (parameters `s`, zero at
    both ends); q interpolates gap / (s (1 - s)) at the interior edge nodes.
    """
    inner = (s > 0.0) & (s < 1.0)
    si = s[inner]
    V = np.polynomial.polynomial.polyvander(si, len(si) - 1)
    coef = np.linalg.solve(V, gap[inner] / (si * (1.0 - si))[:, None])
    q = np.polynomial.polynomial.polyvander(nodes[:, 1], len(si) - 1) @ coef
    return (nodes[:, 0] * nodes[:, 1])[:, None] * q


def build_curved_mesh(mesh: Triangulation, chart: Optional[BoundaryChart], m: int) -> CurvedMesh:
    """Degree-m element maps; identity on interior triangles and for m = 1."""
    if not 1 <= m <= MAX_GEOMETRIC_ORDER:
        raise CurvingError(f"geometric order m must lie in 1..{MAX_GEOMETRIC_ORDER}, got {m}")
    if chart is None:
        triangles, boundary = mesh.triangles.copy(), []
        if mesh.boundary_vertex_params:
            raise CurvingError("mesh carries chart parameters but no chart was given")
    else:
        triangles, boundary = _rotate_to_curved_edge(mesh)

    nodes = lagrange_nodes(m)
    edge_nodes = curved_edge_nodes(m)
    check = triangle_rule(error_degree(3, m)).points
    maps: List[CurvedElementMap] = []
    edge_params: Dict[int, Tuple[float, float]] = {}
    boundary_set = set(boundary)

    for t in range(mesh.n_triangles):
        verts = mesh.vertices[triangles[t]]
        straight = CurvedElementMap(m, verts, np.zeros((0, 2)), True)
        if chart is None or t not in boundary_set:
            maps.append(straight)
            continue
        a, b, c = (int(v) for v in triangles[t])
        if b not in mesh.boundary_vertex_params or c not in mesh.boundary_vertex_params:
            raise CurvingError(f"boundary triangle {t} has a vertex without chart parameter", element=t)
        t0 = mesh.boundary_vertex_params[b]
        t1 = chart.unwrap(t0, mesh.boundary_vertex_params[c])
        edge_params[t] = (t0, t1)
        if m == 1:
            maps.append(straight)
            continue
        s = nodes[edge_nodes, 1]
        gap = chart.point(t0 + s * (t1 - t0)) - straight.affine(nodes[edge_nodes])
        control = straight.affine(nodes) + edge_gap_extension(nodes, s, gap)
        fmap = CurvedElementMap(m, verts, control, False)
        _, _, det = fmap.evaluate(check)
        if np.any(det <= 0.0):
            raise CurvingError(
                f"element {t}: det grad F = {det.min():.3e} <= 0 (mesh too coarse for the boundary curvature)",
                element=t,
            )
        maps.append(fmap)

    boundary_arr = np.array(sorted(boundary), dtype=np.int64)
    interior_arr = np.setdiff1d(np.arange(mesh.n_triangles), boundary_arr)
    logger.info(f"Curved mesh: m={m}, {len(boundary_arr)} boundary / {len(interior_arr)} interior elements")
    return CurvedMesh(mesh, triangles, maps, m, boundary_arr, interior_arr, edge_params, chart)


# ============================================================================
# EXACT MAP
# ============================================================================

@dataclass
class ExactMap:
    cm: CurvedMesh
    chart: Optional[BoundaryChart]
    edge_params: Dict[int, Tuple[float, float]]

    def is_identity(self, element: int) -> bool:
        return self.chart is None or element not in self.edge_params

    def evaluate(self, element: int, ref_pts, fmap=None):
        """Psi composed with F at reference points.

        Returns (G, grad G, grad Psi, det grad Psi) where G = Psi(F(xi)),
        grad G is w.r.t. xi and grad Psi is w.r.t. the physical point F(xi).
        `fmap` may pass a precomputed (F, grad F, det grad F).
        """
        ref_pts = np.atleast_2d(np.asarray(ref_pts, dtype=float))
        fm = self.cm.maps[element]
        F, JF, detF = fmap if fmap is not None else fm.evaluate(ref_pts)
        n = len(ref_pts)
        if self.is_identity(element):
            eye = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
            return F, JF, eye, np.ones(n)

        t0, t1 = self.edge_params[element]
        xi, eta = ref_pts[:, 0], ref_pts[:, 1]
        sig = xi + eta
        safe = sig > 1e-14
        s = np.where(safe, eta / np.where(safe, sig, 1.0), 0.0)
        on_edge = np.column_stack([1.0 - s, s])
        Fe, JFe, _ = fm.evaluate(on_edge)
        tt = t0 + s * (t1 - t0)
        delta = self.chart.point(tt) - Fe
        ddelta = self.chart.tangent(tt) * (t1 - t0) - (JFe[:, :, 1] - JFe[:, :, 0])

        G = F + sig[:, None] * delta
        ds = np.column_stack([np.where(safe, -eta / np.where(safe, sig, 1.0), 0.0),
                              np.where(safe, xi / np.where(safe, sig, 1.0), 0.0)])
        JG = JF + delta[:, :, None] * np.ones(2)[None, None, :] + ddelta[:, :, None] * ds[:, None, :]
        JPsi = JG @ np.linalg.inv(JF)
        detG = JG[:, 0, 0] * JG[:, 1, 1] - JG[:, 0, 1] * JG[:, 1, 0]
        return G, JG, JPsi, detG / detF


def build_exact_map(cm: CurvedMesh, chart: Optional[BoundaryChart]) -> ExactMap:
    return ExactMap(cm, chart, dict(cm.edge_params) if chart is not None else {})


# ============================================================================
# GEOMETRIC REPORT
# ============================================================================

@dataclass
class GeometricRow:
    m: int
    level: int
    h: float
    sup_F_minus_I: float
    sup_Psi_minus_I: float


@dataclass
class GeometricReport:
    rows: List[GeometricRow]
    slopes_F: Dict[int, float]
    slopes_Psi: Dict[int, float]


def _sample_points() -> np.ndarray:
    s = edge_rule(12).points
    return np.vstack([triangle_rule(12).points, np.column_stack([1.0 - s, s]), [[1.0, 0.0], [0.0, 1.0]]])


def geometric_gaps(cm: CurvedMesh, exact: ExactMap) -> Tuple[float, float]:
    """sup |F - I| and sup |Psi - I| over the boundary elements."""
    pts = _sample_points()
    sup_f = sup_psi = 0.0
    for t in cm.boundary_triangles:
        fm = cm.maps[t]
        F, JF, detF = fm.evaluate(pts)
        G = exact.evaluate(int(t), pts, fmap=(F, JF, detF))[0]
        sup_f = max(sup_f, float(np.max(np.linalg.norm(F - fm.affine(pts), axis=1))))
        sup_psi = max(sup_psi, float(np.max(np.linalg.norm(G - F, axis=1))))
    return sup_f, sup_psi


def _last_three_slope(h: List[float], err: List[float]) -> float:
    h, err = np.asarray(h[-3:]), np.asarray(err[-3:])
    if len(h) < 2 or np.any(err <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def geometric_report(chart: BoundaryChart, base_mesh: Triangulation, m_list, n_refinements: int) -> GeometricReport:
    """Boundary gaps of F^m and Psi^m over a uniform refinement sequence."""
    for m in m_list:
        if not 1 <= m <= MAX_GEOMETRIC_ORDER:
            raise CurvingError(f"geometric order m must lie in 1..{MAX_GEOMETRIC_ORDER}, got {m}")
    meshes = [base_mesh]
    for _ in range(n_refinements):
        meshes.append(uniform_refine(meshes[-1], chart))

    rows: List[GeometricRow] = []
    for m in m_list:
        for level, mesh in enumerate(meshes):
            cm = build_curved_mesh(mesh, chart, m)
            sup_f, sup_psi = geometric_gaps(cm, build_exact_map(cm, chart))
            rows.append(GeometricRow(m, level, mesh.h, sup_f, sup_psi))
            logger.info(f"m={m} level={level}: sup|F-I|={sup_f:.3e} sup|Psi-I|={sup_psi:.3e}")

    slopes_f, slopes_psi = {}, {}
    for m in m_list:
        sel = [r for r in rows if r.m == m]
        h = [r.h for r in sel]
        slopes_f[m] = _last_three_slope(h, [r.sup_F_minus_I for r in sel])
        slopes_psi[m] = _last_three_slope(h, [r.sup_Psi_minus_I for r in sel])
    return GeometricReport(rows, slopes_f, slopes_psi)
