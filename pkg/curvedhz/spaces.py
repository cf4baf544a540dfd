"""
Hu-Zhang stress space and discontinuous displacement space.

Stress DOFs of an element of degree p, in local order:
  - vertex values (tau11, tau12, tau22) at local vertices 0, 1, 2      shared
  - per local edge: int nu.tau.nu l_j, int t.tau.nu l_j, j <= p-2     shared
  - per local edge: int t.tau.t l_j, j <= p-2                          owned
  - int tau_c q_b over the reference triangle, deg q_b <= p-3           owned
l_j is the shifted Legendre polynomial on the edge, parametrized from the
lower to the higher global vertex index; t and nu = (t_y, -t_x) are the unit
tangent and normal of the straight edge in that direction. Both neighbours of
an edge therefore evaluate the same functionals and no sign flips are needed.

Shape functions live on the straight triangle and are carried to K^m by plain
composition with F^{-1}; symmetry is kept by storing three components.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import eval_legendre

from .curving import CurvedMesh, monomials
from .errors import SpaceError
from .mesh import LOCAL_EDGES
from .quadrature import QuadratureRule, edge_rule, triangle_rule

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
DEFAULT_WORKERS = 4


def n_monomials(p: int) -> int:
    return (p + 1) * (p + 2) // 2 if p >= 0 else 0


def stress_local_size(p: int) -> int:
    return 3 * n_monomials(p)


def shifted_legendre(j: int, s):
    return eval_legendre(j, 2.0 * np.asarray(s) - 1.0)


def edge_frame(a: np.ndarray, b: np.ndarray):
    """Unit tangent from a to b and nu = (t_y, -t_x)."""
    t = (b - a) / np.linalg.norm(b - a)
    return t, np.array([t[1], -t[0]])


def nn_weights(nu):
    return np.array([nu[0] ** 2, 2.0 * nu[0] * nu[1], nu[1] ** 2])


def tn_weights(t, nu):
    return np.array([t[0] * nu[0], t[0] * nu[1] + t[1] * nu[0], t[1] * nu[1]])


def tt_weights(t):
    return nn_weights(t)


def components_to_tensor(vals: np.ndarray) -> np.ndarray:
    """(..., 3) -> (..., 2, 2) symmetric."""
    out = np.empty(vals.shape[:-1] + (2, 2))
    out[..., 0, 0] = vals[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = vals[..., 1]
    out[..., 1, 1] = vals[..., 2]
    return out


# ============================================================================
# DOF FUNCTIONALS
# ============================================================================

@dataclass
class Functionals:
    """DOF_i(tau) = sum_{q,c} weights[i, q, c] * tau_c(points[q])."""
    points: np.ndarray      # (n_pts, 2) reference coordinates
    weights: np.ndarray     # (n_loc, n_pts, 3)
    edge_frames: list       # per local edge: (start, end, t, nu)

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """samples (n_pts, 3, ...) -> DOF values (n_loc, ...)."""
        return np.tensordot(self.weights, samples, axes=([1, 2], [0, 1]))


@dataclass(frozen=True)
class DofLayout:
    p: int

    @property
    def n_edge_moments(self) -> int:
        return self.p - 1

    @property
    def n_interior(self) -> int:
        return 3 * n_monomials(self.p - 3)

    def vertex(self, v: int, c: int) -> int:
        return 3 * v + c

    def nn(self, i: int, j: int) -> int:
        return 9 + i * 2 * (self.p - 1) + j

    def tn(self, i: int, j: int) -> int:
        return 9 + i * 2 * (self.p - 1) + (self.p - 1) + j

    def tt(self, i: int, j: int) -> int:
        return 9 + 6 * (self.p - 1) + i * (self.p - 1) + j

    @property
    def owned_start(self) -> int:
        return 9 + 6 * (self.p - 1)

    @property
    def size(self) -> int:
        return 9 + 9 * (self.p - 1) + self.n_interior


def build_functionals(p: int, vertices: np.ndarray, global_ids) -> Functionals:
    """DOF functionals of a degree-p element on the straight triangle `vertices`."""
    layout = DofLayout(p)
    erule = edge_rule(2 * p)
    trule = triangle_rule(2 * p)
    ne, nt = len(erule), len(trule)
    n_pts = 3 + 3 * ne + nt
    points = np.zeros((n_pts, 2))
    W = np.zeros((layout.size, n_pts, 3))

    points[:3] = REFERENCE_VERTICES
    for v in range(3):
        for c in range(3):
            W[layout.vertex(v, c), v, c] = 1.0

    frames = []
    for i, (e0, e1) in enumerate(LOCAL_EDGES):
        start, end = (e0, e1) if global_ids[e0] < global_ids[e1] else (e1, e0)
        t, nu = edge_frame(vertices[start], vertices[end])
        frames.append((start, end, t, nu))
        sl = slice(3 + i * ne, 3 + (i + 1) * ne)
        s = erule.points
        points[sl] = np.outer(1.0 - s, REFERENCE_VERTICES[start]) + np.outer(s, REFERENCE_VERTICES[end])
        w_nn, w_tn, w_tt = nn_weights(nu), tn_weights(t, nu), tt_weights(t)
        for j in range(p - 1):
            lw = erule.weights * shifted_legendre(j, s)
            W[layout.nn(i, j), sl] = np.outer(lw, w_nn)
            W[layout.tn(i, j), sl] = np.outer(lw, w_tn)
            W[layout.tt(i, j), sl] = np.outer(lw, w_tt)

    sl = slice(3 + 3 * ne, n_pts)
    points[sl] = trule.points
    if p >= 3:
        q, _, _ = monomials(p - 3, trule.points)
        row = layout.owned_start + 3 * (p - 1)
        for b in range(q.shape[1]):
            for c in range(3):
                W[row, sl, c] = trule.weights * q[:, b]
                row += 1
    return Functionals(points, W, frames)


# ============================================================================
# STRESS SPACE
# ============================================================================

@dataclass
class ElementStress:
    degree: int
    coefficients: np.ndarray    # (3, N_p, n_loc): monomial coefficients of the nodal basis
    extraction: np.ndarray      # (n_loc, n_red)
    dofs: np.ndarray            # (n_red,) global indices
    rows: np.ndarray            # (n_red,) local DOF carried by each reduced variable
    condition: float
    functionals: Functionals

    @property
    def reduced_coefficients(self) -> np.ndarray:
        return self.coefficients @ self.extraction


@dataclass
class StressSpace:
    cm: CurvedMesh
    k: int
    enriched: bool
    degrees: np.ndarray
    edge_degrees: np.ndarray
    edge_offsets: np.ndarray
    elements: List[ElementStress]
    n_dofs: int
    mixed_edges: List[int] = field(default_factory=list)

    @property
    def n_elements(self) -> int:
        return len(self.elements)


def enrichment_row(k: int, f0_weights, f1_weights):
    """Eliminated moment k-1 of a degree-(k+1) trace whose top Legendre mode vanishes.

    Returns (coefficients of DOF_n for n < k-1, weight on f(0), weight on f(1)).
    """
    scale = 1.0 / (2 * k - 1)
    moment = np.array([-0.5 * (1 - (-1) ** (k + n)) * (2 * n + 1) * scale for n in range(k - 1)])
    return moment, -0.5 * (-1) ** k * scale * np.asarray(f0_weights), 0.5 * scale * np.asarray(f1_weights)


def _element_stress(space_args, t: int) -> ElementStress:
    cm, degrees, edge_degrees, edge_offsets, owned_offsets = space_args
    p = int(degrees[t])
    layout = DofLayout(p)
    tri = cm.triangles[t]
    verts = cm.base.vertices[tri]
    fun = build_functionals(p, verts, tri)

    Q, _, _ = monomials(p, fun.points)
    D = np.einsum("iqc,qa->ica", fun.weights, Q).reshape(layout.size, -1)
    cond = float(np.linalg.cond(D))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SpaceError(f"element {t}: DOF matrix singular (cond {cond:.3e}) for degree {p}", condition=cond)
    coeffs = np.linalg.inv(D).reshape(3, n_monomials(p), layout.size)

    rows: List[int] = []
    dofs: List[int] = []
    n_red = 9 + sum(2 * (int(edge_degrees[e]) - 1) for e in cm.local_edges(t)) + (layout.size - layout.owned_start)
    E = np.zeros((layout.size, n_red))
    col = 0
    for v in range(3):
        for c in range(3):
            E[layout.vertex(v, c), col] = 1.0
            rows.append(layout.vertex(v, c))
            dofs.append(3 * int(tri[v]) + c)
            col += 1

    for i, e in enumerate(cm.local_edges(t)):
        pe = int(edge_degrees[e])
        start, end, tvec, nu = fun.edge_frames[i]
        shared = pe - 1
        base = edge_offsets[e]
        nn_cols = list(range(col, col + shared))
        tn_cols = list(range(col + shared, col + 2 * shared))
        for j in range(shared):
            E[layout.nn(i, j), nn_cols[j]] = 1.0
        for j in range(shared):
            E[layout.tn(i, j), tn_cols[j]] = 1.0
        rows.extend(layout.nn(i, j) for j in range(shared))
        rows.extend(layout.tn(i, j) for j in range(shared))
        dofs.extend(range(base, base + 2 * shared))
        col += 2 * shared
        if pe == p:
            continue
        if pe != p - 1:
            raise SpaceError(f"element {t}: edge degree {pe} incompatible with element degree {p}")
        for row, wts, mcols in ((layout.nn(i, p - 2), nn_weights(nu), nn_cols),
                                (layout.tn(i, p - 2), tn_weights(tvec, nu), tn_cols)):
            moment, w0, w1 = enrichment_row(pe, wts, wts)
            for n, cidx in enumerate(mcols):
                E[row, cidx] = moment[n]
            for c in range(3):
                E[row, 3 * start + c] += w0[c]
                E[row, 3 * end + c] += w1[c]

    n_owned = layout.size - layout.owned_start
    for r in range(n_owned):
        E[layout.owned_start + r, col + r] = 1.0
        rows.append(layout.owned_start + r)
    dofs.extend(range(owned_offsets[t], owned_offsets[t] + n_owned))
    return ElementStress(p, coeffs, E, np.array(dofs, dtype=np.int64), np.array(rows, dtype=np.int64), cond, fun)


def build_stress_space(cm: CurvedMesh, k: int, enriched: bool = False, workers: int = DEFAULT_WORKERS) -> StressSpace:
    """Variable-degree Hu-Zhang space; degree k+1 on boundary elements when enriched."""
    if k < 3:
        raise SpaceError(f"the Hu-Zhang stress element needs k >= 3, got k={k}")
    mesh = cm.base
    degrees = np.full(cm.n_triangles, k, dtype=np.int64)
    if enriched:
        degrees[cm.boundary_triangles] = k + 1

    et = mesh.edge_triangles
    edge_degrees = np.where(et[:, 1] >= 0, np.minimum(degrees[et[:, 0]], degrees[np.maximum(et[:, 1], 0)]), degrees[et[:, 0]])
    mixed = [int(e) for e in np.flatnonzero((et[:, 1] >= 0) & (degrees[et[:, 0]] != degrees[np.maximum(et[:, 1], 0)]))]

    n_vertex_dofs = 3 * mesh.n_vertices
    edge_sizes = 2 * (edge_degrees - 1)
    edge_offsets = n_vertex_dofs + np.concatenate([[0], np.cumsum(edge_sizes)[:-1]])
    owned_sizes = np.array([DofLayout(int(p)).size - DofLayout(int(p)).owned_start for p in degrees])
    start_owned = n_vertex_dofs + int(edge_sizes.sum())
    owned_offsets = start_owned + np.concatenate([[0], np.cumsum(owned_sizes)[:-1]])
    n_dofs = start_owned + int(owned_sizes.sum())

    args = (cm, degrees, edge_degrees, edge_offsets, owned_offsets)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        elements = list(pool.map(lambda t: _element_stress(args, t), range(cm.n_triangles)))

    conds = [el.condition for el in elements]
    logger.info(f"Stress space: k={k}, enriched={enriched}, {n_dofs} DOFs, {len(mixed)} mixed edges, "
                f"max DOF-matrix cond {max(conds):.2e}")
    return StressSpace(cm, k, enriched, degrees, edge_degrees, edge_offsets, elements, n_dofs, mixed)


# ============================================================================
# DISPLACEMENT SPACE
# ============================================================================

@lru_cache(maxsize=None)
def orthonormal_modes(q: int) -> np.ndarray:
    """Coefficients R (N_q, N_q) of modes orthonormal on the reference triangle.

    Modes are sum_a R[a, i] * mono_a(xi - 1/3, eta - 1/3).
    """
    rule = triangle_rule(2 * q)
    V, _, _ = monomials(q, rule.points - 1.0 / 3.0)
    G = V.T @ (rule.weights[:, None] * V)
    R = np.linalg.inv(np.linalg.cholesky(G)).T
    G2 = R.T @ G @ R
    R = R @ np.linalg.inv(np.linalg.cholesky(G2)).T
    return R


def mode_values(q: int, ref_pts: np.ndarray):
    """Mode values (n, N_q) and reference gradients (n, N_q, 2)."""
    R = orthonormal_modes(q)
    v, dx, dy = monomials(q, np.atleast_2d(ref_pts) - 1.0 / 3.0)
    return v @ R, np.stack([dx @ R, dy @ R], axis=2)


@dataclass
class DisplacementSpace:
    cm: CurvedMesh
    k: int
    enriched: bool
    star: bool
    degrees: np.ndarray
    offsets: np.ndarray         # (nt + 1,)

    @property
    def n_dofs(self) -> int:
        return int(self.offsets[-1])

    def element_dofs(self, t: int) -> np.ndarray:
        return np.arange(self.offsets[t], self.offsets[t + 1])

    def n_modes(self, t: int) -> int:
        return n_monomials(int(self.degrees[t]))


def build_displacement_space(cm: CurvedMesh, k: int, enriched: bool = False, star: bool = False) -> DisplacementSpace:
    """Discontinuous modal space of degree k-1 (k+1 for star), one higher on enriched boundary elements."""
    if k < 3:
        raise SpaceError(f"the Hu-Zhang stress element needs k >= 3, got k={k}")
    base = k + 1 if star else k - 1
    degrees = np.full(cm.n_triangles, base, dtype=np.int64)
    if enriched:
        degrees[cm.boundary_triangles] = base + 1
    sizes = np.array([2 * n_monomials(int(q)) for q in degrees])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    logger.info(f"Displacement space: base degree {base}, enriched={enriched}, {int(offsets[-1])} DOFs")
    return DisplacementSpace(cm, k, enriched, star, degrees, offsets)


# ============================================================================
# TABULATION AND EVALUATION
# ============================================================================

@dataclass
class ElementTable:
    points: np.ndarray      # F(xi)
    jac: np.ndarray         # grad F
    det: np.ndarray
    values: np.ndarray      # (n, 3, n_red)
    divergence: np.ndarray  # (n, 2, n_red), physical
    dofs: np.ndarray


class BasisTable:
    """Stress basis of each element at the points of one reference rule.

    Reference monomials are tabulated once per degree; element tables are
    built on demand, so memory stays per element.
    """

    def __init__(self, space: StressSpace, rule: QuadratureRule):
        self.space = space
        self.rule = rule
        self._mono: Dict[int, tuple] = {}

    def _monomials(self, p: int):
        if p not in self._mono:
            self._mono[p] = monomials(p, self.rule.points)
        return self._mono[p]

    def element(self, t: int, fmap=None) -> ElementTable:
        el = self.space.elements[t]
        F, JF, detF = fmap if fmap is not None else self.space.cm.maps[t].evaluate(self.rule.points)
        if np.any(detF <= 0.0):
            raise SpaceError(f"element {t}: nonpositive Jacobian at quadrature points")
        Q, Qx, Qy = self._monomials(el.degree)
        C = el.reduced_coefficients                          # (3, N, n_red)
        values = np.einsum("xa,car->xcr", Q, C)
        dref = np.stack([np.einsum("xa,car->xcr", Qx, C), np.einsum("xa,car->xcr", Qy, C)], axis=3)
        return ElementTable(F, JF, detF, values, physical_divergence(dref, JF), el.dofs)


def tabulate(space: StressSpace, rule: QuadratureRule, cm: Optional[CurvedMesh] = None) -> BasisTable:
    if cm is not None and cm is not space.cm:
        raise SpaceError("stress space was built on a different curved mesh")
    return BasisTable(space, rule)


def physical_divergence(dref: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """div of tau = tau_hat o F^{-1}; dref (n, 3, r, 2) reference gradients of the components."""
    Jinv = np.linalg.inv(jac)                                # (n, 2, 2): [r, j] = d xi_r / d x_j
    d = np.einsum("ncrs,nsj->ncrj", dref, Jinv)              # d tau_c / d x_j
    div = np.empty((dref.shape[0], 2) + dref.shape[2:3])
    div[:, 0] = d[:, 0, :, 0] + d[:, 1, :, 1]
    div[:, 1] = d[:, 1, :, 0] + d[:, 2, :, 1]
    return div


def stress_values(space: StressSpace, coeffs: np.ndarray, element: int, ref_pts) -> np.ndarray:
    """Symmetric tensors (n, 2, 2) of the global field at reference points of one element."""
    el = space.elements[element]
    Q, _, _ = monomials(el.degree, np.atleast_2d(ref_pts))
    local = el.reduced_coefficients @ coeffs[el.dofs]        # (3, N)
    return components_to_tensor(Q @ local.T)


def stress_divergence(space: StressSpace, coeffs: np.ndarray, element: int, ref_pts) -> np.ndarray:
    el = space.elements[element]
    ref_pts = np.atleast_2d(ref_pts)
    _, Qx, Qy = monomials(el.degree, ref_pts)
    local = el.reduced_coefficients @ coeffs[el.dofs]
    dref = np.stack([Qx @ local.T, Qy @ local.T], axis=2)[:, :, None, :]
    _, JF, _ = space.cm.maps[element].evaluate(ref_pts)
    return physical_divergence(dref, JF)[:, :, 0]


def displacement_values(space: DisplacementSpace, coeffs: np.ndarray, element: int, ref_pts) -> np.ndarray:
    """Vectors (n, 2) of the global discontinuous field at reference points of one element."""
    phi, _ = mode_values(int(space.degrees[element]), ref_pts)
    c = coeffs[space.element_dofs(element)].reshape(2, -1)
    return phi @ c.T


def interpolate_stress(space: StressSpace, stress_field: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply every element's DOF functionals to a field sampled on the straight triangle.

    `stress_field(x)` maps (n, 2) points to (n, 2, 2) tensors or (n, 3) components.
    """
    out = np.zeros(space.n_dofs)
    for t, el in enumerate(space.elements):
        x = space.cm.maps[t].affine(el.functionals.points)
        vals = np.asarray(stress_field(x), dtype=float)
        if vals.ndim == 3:
            vals = np.stack([vals[:, 0, 0], 0.5 * (vals[:, 0, 1] + vals[:, 1, 0]), vals[:, 1, 1]], axis=1)
        local = el.functionals.apply(vals)
        out[el.dofs] = local[el.rows]
    return out
