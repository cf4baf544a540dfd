"""
Straight conforming triangulations.

- Triangulation: vertices, CCW triangles, derived edges/adjacency, chart
  parameters of boundary vertices
- read_gmsh / write_gmsh: ASCII MSH 2.2 and 4.1 (read), 2.2 (write)
- generate_disk_mesh: ring layout + Delaunay for smooth star-shaped charts
- uniform_refine: red refinement, boundary midpoints snapped to the chart
- validate_mesh: counts, h, min angle, at-most-two-boundary-vertices check
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay

from .errors import MeshError
from .geometry import BoundaryChart, project_to_boundary

logger = logging.getLogger(__name__)

MAX_TRIANGLES = 10_000_000
PROJECTION_TOLERANCE = 1e-6     # times h, for imported boundary vertices
BOUNDARY_PHYSICAL_NAME = "boundary"

# local edge i is opposite local vertex i
LOCAL_EDGES = np.array([[1, 2], [0, 2], [0, 1]])


# ============================================================================
# DATA MODEL
# ============================================================================

@dataclass
class Triangulation:
    vertices: np.ndarray                     # (nv, 2)
    triangles: np.ndarray                    # (nt, 3), counterclockwise
    boundary_vertex_params: Dict[int, float] = field(default_factory=dict)
    chart_name: Optional[str] = None

    edges: np.ndarray = field(init=False, repr=False)            # (ne, 2), low < high
    edge_triangles: np.ndarray = field(init=False, repr=False)   # (ne, 2), -1 when absent
    triangle_edges: np.ndarray = field(init=False, repr=False)   # (nt, 3)
    boundary_edges: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError(f"triangles must have shape (n, 3), got {self.triangles.shape}")

        local = self.triangles[:, LOCAL_EDGES]                      # (nt, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.triangle_edges = inverse.reshape(-1, 3)

        counts = np.bincount(inverse, minlength=len(self.edges))
        if np.any(counts > 2):
            bad = int(np.argmax(counts > 2))
            raise MeshError(f"edge {self.edges[bad].tolist()} shared by {counts[bad]} triangles (non-manifold)")
        self.edge_triangles = -np.ones((len(self.edges), 2), dtype=np.int64)
        for t, row in enumerate(self.triangle_edges):
            for e in row:
                slot = 0 if self.edge_triangles[e, 0] < 0 else 1
                self.edge_triangles[e, slot] = t
        self.boundary_edges = np.flatnonzero(self.edge_triangles[:, 1] < 0)
        self.h = float(self.diameters().max()) if len(self.triangles) else 0.0
        self._edge_lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self, a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in self._edge_lookup:
            raise MeshError(f"no edge between vertices {a} and {b}")
        return self._edge_lookup[key]

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges].ravel())

    def is_boundary_edge(self, e: int) -> bool:
        return self.edge_triangles[e, 1] < 0

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
        return lengths.max(axis=1)

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)


@dataclass
class MeshReport:
    n_vertices: int
    n_triangles: int
    n_edges: int
    h: float
    min_angle: float
    boundary_shape_ok: bool
    offending_triangles: List[int]
    degenerate_triangles: List[int]         # nonpositive signed area


def _orient_ccw(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    triangles = np.array(triangles, dtype=np.int64)
    p = vertices[triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def unit_square_mesh(n: int = 1) -> Triangulation:
    """Structured mesh of [0,1]^2 with n x n squares, each split along its diagonal."""
    if n < 1:
        raise MeshError(f"unit_square_mesh needs n >= 1, got {n}")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            v0 = j * (n + 1) + i
            v1, v2, v3 = v0 + 1, v0 + n + 2, v0 + n + 1
            tris.append((v0, v1, v2))
            tris.append((v0, v2, v3))
    return Triangulation(vertices, np.array(tris))


# ============================================================================
# GMSH I/O
# ============================================================================

def _sections(text: str) -> Dict[str, List[str]]:
    lines = [ln.strip() for ln in text.splitlines()]
    out: Dict[str, List[str]] = {}
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("$") and not ln.startswith("$End"):
            name = ln[1:]
            body = []
            i += 1
            while i < len(lines) and lines[i] != f"$End{name}":
                if lines[i]:
                    body.append(lines[i])
                i += 1
            if i == len(lines):
                raise MeshError(f"unterminated section ${name}")
            out[name] = body
        i += 1
    return out


def _physical_names(sec) -> Dict[tuple, str]:
    names = {}
    for ln in sec.get("PhysicalNames", [])[1:]:
        parts = ln.split(maxsplit=2)
        names[(int(parts[0]), int(parts[1]))] = parts[2].strip('"')
    return names


def _parse_v2(sec):
    nodes = {}
    for ln in sec["Nodes"][1:]:
        p = ln.split()
        nodes[int(p[0])] = (float(p[1]), float(p[2]))
    triangles, lines = [], []
    for ln in sec["Elements"][1:]:
        p = [int(v) for v in ln.split()]
        etype, ntags = p[1], p[2]
        physical = p[3] if ntags > 0 else 0
        conn = p[3 + ntags:]
        if etype == 2:
            triangles.append(conn[:3])
        elif etype == 1:
            lines.append((physical, conn[:2]))
        elif etype == 15:
            continue
        else:
            raise MeshError(f"unsupported element type {etype} (only 3-node triangles and 2-node lines)")
    return nodes, triangles, lines


def _parse_v4(sec):
    # curve entity tag -> first physical tag
    curve_physical = {}
    ent = sec.get("Entities")
    if ent:
        n_pts, n_curves = (int(v) for v in ent[0].split()[:2])
        for ln in ent[1 + n_pts:1 + n_pts + n_curves]:
            p = ln.split()
            n_phys = int(p[7])
            curve_physical[int(p[0])] = int(p[8]) if n_phys > 0 else 0

    nodes = {}
    body = sec["Nodes"]
    n_blocks = int(body[0].split()[0])
    i = 1
    for _ in range(n_blocks):
        dim, _tag, parametric, count = (int(v) for v in body[i].split())
        tags = [int(body[i + 1 + j]) for j in range(count)]
        coords = body[i + 1 + count:i + 1 + 2 * count]
        for t, c in zip(tags, coords):
            xyz = c.split()
            nodes[t] = (float(xyz[0]), float(xyz[1]))
        i += 1 + 2 * count

    triangles, lines = [], []
    body = sec["Elements"]
    n_blocks = int(body[0].split()[0])
    i = 1
    for _ in range(n_blocks):
        dim, tag, etype, count = (int(v) for v in body[i].split())
        rows = [[int(v) for v in body[i + 1 + j].split()] for j in range(count)]
        i += 1 + count
        if etype == 2:
            triangles.extend(r[1:4] for r in rows)
        elif etype == 1:
            physical = curve_physical.get(tag, 0)
            lines.extend((physical, r[1:3]) for r in rows)
        elif etype == 15:
            continue
        else:
            raise MeshError(f"unsupported element type {etype} (only 3-node triangles and 2-node lines)")
    return nodes, triangles, lines


def read_gmsh(text, chart: Optional[BoundaryChart] = None) -> Triangulation:
    """Parse an ASCII Gmsh mesh (MSH 2.2 or 4.1).

    Nodes are compacted to 0..n-1 in tag order. With a chart, every boundary
    vertex is projected onto it; a displacement above 1e-6*h means the file
    does not belong to this chart.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    sec = _sections(text)
    if "MeshFormat" not in sec:
        raise MeshError("missing $MeshFormat section")
    header = sec["MeshFormat"][0].split()
    version = header[0]
    if len(header) > 1 and header[1] != "0":
        raise MeshError("binary MSH files are not supported")
    if version.startswith("2."):
        nodes, triangles, lines = _parse_v2(sec)
    elif version == "4.1":
        nodes, triangles, lines = _parse_v4(sec)
    else:
        raise MeshError(f"unsupported MSH version {version} (expected 2.2 or 4.1)")
    if not triangles:
        raise MeshError("mesh contains no triangles")

    used = sorted({t for tri in triangles for t in tri})
    missing = [t for t in used if t not in nodes]
    if missing:
        raise MeshError(f"elements reference undefined node tags {missing[:5]}")
    index = {tag: i for i, tag in enumerate(used)}
    vertices = np.array([nodes[t] for t in used])
    tris = _orient_ccw(vertices, [[index[t] for t in tri] for tri in triangles])
    mesh = Triangulation(vertices, tris)

    names = _physical_names(sec)
    if names:
        wanted = {tag for (dim, tag), name in names.items() if dim == 1 and name == BOUNDARY_PHYSICAL_NAME}
        boundary_lines = [conn for phys, conn in lines if phys in wanted]
    else:
        boundary_lines = [conn for phys, conn in lines]
    for a, b in boundary_lines:
        if a not in index or b not in index:
            raise MeshError(f"dangling boundary line ({a}, {b}): node not used by any triangle")
        key = (min(index[a], index[b]), max(index[a], index[b]))
        e = mesh._edge_lookup.get(key)
        if e is None or not mesh.is_boundary_edge(e):
            raise MeshError(f"dangling boundary line ({a}, {b}): not a boundary edge of the triangulation")
    if boundary_lines and len(boundary_lines) != len(mesh.boundary_edges):
        logger.warning(f"{len(boundary_lines)} boundary lines tagged, {len(mesh.boundary_edges)} boundary edges found")

    if chart is not None:
        mesh = snap_to_chart(mesh, chart, PROJECTION_TOLERANCE * mesh.h)
    logger.info(f"Read MSH {version}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return mesh


def snap_to_chart(mesh: Triangulation, chart: BoundaryChart, tolerance: float) -> Triangulation:
    """Attach chart parameters to all boundary vertices, moving each onto the curve."""
    vertices = mesh.vertices.copy()
    params = {}
    for v in mesh.boundary_vertices():
        cp = project_to_boundary(chart, vertices[v])
        dist = float(np.linalg.norm(cp.x - vertices[v]))
        if dist > tolerance:
            raise MeshError(
                f"boundary vertex {v} lies {dist:.3e} from chart '{chart.name}' (tolerance {tolerance:.3e})",
                distance=dist,
            )
        vertices[v] = cp.x
        params[int(v)] = cp.t
    return Triangulation(vertices, mesh.triangles, params, chart.name)


def write_gmsh(mesh: Triangulation) -> str:
    """Serialize as ASCII MSH 2.2 with physical groups 'boundary' (lines) and 'domain'."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat",
           "$PhysicalNames", "2", f'1 1 "{BOUNDARY_PHYSICAL_NAME}"', '2 2 "domain"', "$EndPhysicalNames",
           "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {float(x)!r} {float(y)!r} 0" for i, (x, y) in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_edges) + mesh.n_triangles)]
    tag = 1
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        out.append(f"{tag} 1 2 1 1 {a + 1} {b + 1}")
        tag += 1
    for a, b, c in mesh.triangles:
        out.append(f"{tag} 2 2 2 1 {a + 1} {b + 1} {c + 1}")
        tag += 1
    out.append("$EndElements")
    return "\n".join(out) + "\n"


# ============================================================================
# GENERATION AND REFINEMENT
# ============================================================================

def generate_disk_mesh(chart: BoundaryChart, target_h: float) -> Triangulation:
    """Ring-layered Delaunay mesh of the region bounded by a star-shaped chart.

    L = round(1/target_h) rings; ring j carries max(6, round(2*pi*j)) points at
    relative radius j/L with alternating half-step offsets; the outer ring sits
    on the chart at uniform parameters.
    """
    if not 0.0 < target_h <= 1.0:
        raise MeshError(f"target_h must lie in (0, 1], got {target_h}")
    L = max(1, int(round(1.0 / target_h)))
    ring_sizes = [max(6, int(round(2.0 * math.pi * j))) for j in range(1, L + 1)]
    estimate = 2 * (1 + sum(ring_sizes))
    if estimate > MAX_TRIANGLES:
        raise MeshError(f"target_h={target_h} would produce ~{estimate} triangles (limit {MAX_TRIANGLES})")

    points = [(0.0, 0.0)]
    params = {}
    for j, n in enumerate(ring_sizes, start=1):
        offset = 0.5 * (j % 2)
        t = chart.start + chart.period * (np.arange(n) + offset) / n
        if j == L:
            for i, ti in enumerate(t):
                params[len(points) + i] = float(ti)
            points.extend(map(tuple, chart.point(t)))
        else:
            points.extend(map(tuple, (j / L) * chart.point(t)))
    vertices = np.array(points)

    tri = Delaunay(vertices).simplices
    # drop hull triangles outside non-convex charts
    boundary_ids = sorted(params)
    outline = Path(vertices[boundary_ids])
    centroids = vertices[tri].mean(axis=1)
    tri = tri[outline.contains_points(centroids)]
    mesh = Triangulation(vertices, _orient_ccw(vertices, tri), params, chart.name)

    on_chart = set(params)
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        if a not in on_chart or b not in on_chart:
            raise MeshError(f"generated mesh has a boundary edge ({a}, {b}) off the chart; chart not star-shaped?")
    logger.info(f"Disk mesh: target_h={target_h}, {L} rings, {mesh.n_triangles} triangles, h={mesh.h:.4f}")
    return mesh


def uniform_refine(mesh: Triangulation, chart: Optional[BoundaryChart] = None) -> Triangulation:
    """Red refinement; boundary-edge midpoints are projected onto the chart."""
    if mesh.boundary_vertex_params and chart is None:
        raise MeshError("mesh carries chart parameters; uniform_refine needs the chart")
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    params = dict(mesh.boundary_vertex_params)

    if chart is not None:
        for e in mesh.boundary_edges:
            a, b = (int(v) for v in mesh.edges[e])
            if a not in params or b not in params:
                raise MeshError(f"boundary edge ({a}, {b}) has an endpoint without chart parameter")
            t0 = params[a]
            t1 = chart.unwrap(t0, params[b])
            cp = project_to_boundary(chart, mids[e], hint=0.5 * (t0 + t1))
            mids[e] = cp.x
            params[nv + int(e)] = cp.t

    te = mesh.triangle_edges + nv
    a, b, c = mesh.triangles.T
    m_bc, m_ca, m_ab = te[:, 0], te[:, 1], te[:, 2]
    children = np.concatenate([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ])
    # keep the four children of a parent together
    children = children.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    refined = Triangulation(np.vstack([mesh.vertices, mids]), children, params, mesh.chart_name)
    logger.info(f"Refined mesh: {mesh.n_triangles} -> {refined.n_triangles} triangles, h={refined.h:.4f}")
    return refined


def validate_mesh(mesh: Triangulation) -> MeshReport:
    """Counts, minimum angle and the at-most-two-boundary-vertices check."""
    p = mesh.vertices[mesh.triangles]
    angles = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.sum(u * w, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    min_angle = float(np.min(angles)) if len(mesh.triangles) else 0.0

    on_boundary = set(int(v) for v in mesh.boundary_vertices()) | set(mesh.boundary_vertex_params)
    n_bverts = np.array([sum(int(v) in on_boundary for v in tri) for tri in mesh.triangles])
    is_bedge = mesh.edge_triangles[:, 1] < 0
    n_bedges = is_bedge[mesh.triangle_edges].sum(axis=1)
    offending = [int(t) for t in np.flatnonzero((n_bverts >= 3) | (n_bedges >= 2))]

    degenerate = [int(t) for t in np.flatnonzero(mesh.signed_areas() <= 0)]
    if degenerate:
        logger.warning(f"{len(degenerate)} triangles with nonpositive area")
    return MeshReport(mesh.n_vertices, mesh.n_triangles, mesh.n_edges, mesh.h, min_angle, not offending, offending,
                      degenerate)
