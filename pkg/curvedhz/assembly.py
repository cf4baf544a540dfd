"""
Assembly of the curved mixed elasticity system.

    a(sigma, tau) = int (A sigma) : tau          b(tau, v) = int div tau . v
    rhs_disp_i    = - int (f o Psi) det(grad Psi) v_i
    rhs_stress_j  = int_{boundary} (tau_j nu) . (g o Psi) ds

All integrals run over reference elements with det grad F; Psi and its
Jacobian come from the exact map, never from inverting F.

Also here: L2 projection onto the displacement space, local displacement
postprocessing, and the Gram matrices used for norms and stability constants.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import sparse

from .curving import CurvedMesh, ExactMap, monomials
from .errors import AssemblyError
from .mesh import LOCAL_EDGES
from .quadrature import QuadratureRule, assembly_degree, edge_rule, triangle_rule
from .spaces import DisplacementSpace, StressSpace, mode_values, stress_values, tabulate

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = 4
MAX_LOCAL_CONDITION = 1e12

# tau : sigma in (11, 12, 22) components
FROBENIUS = np.diag([1.0, 2.0, 1.0])
TRACE = np.array([1.0, 0.0, 1.0])

Field = Callable[[np.ndarray], np.ndarray]


# ============================================================================
# MATERIAL
# ============================================================================

@dataclass(frozen=True)
class MaterialLaw:
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise AssemblyError(f"Lame parameters must be positive, got lambda={self.lam}, mu={self.mu}")

    def apply_A(self, sigma: np.ndarray) -> np.ndarray:
        """Compliance: (1/2mu)(sigma - lambda/(2 lambda + 2 mu) tr(sigma) I) on (..., 2, 2)."""
        tr = np.trace(sigma, axis1=-2, axis2=-1)[..., None, None]
        return (sigma - self.lam / (2 * self.lam + 2 * self.mu) * tr * np.eye(2)) / (2 * self.mu)

    def apply_C(self, eps: np.ndarray) -> np.ndarray:
        tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
        return 2 * self.mu * eps + self.lam * tr * np.eye(2)

    @property
    def compliance_matrix(self) -> np.ndarray:
        """M with (A tau):sigma = tau_c M_cd sigma_d in (11, 12, 22) components."""
        return (FROBENIUS - self.lam / (2 * self.lam + 2 * self.mu) * np.outer(TRACE, TRACE)) / (2 * self.mu)


# ============================================================================
# SYSTEM
# ============================================================================

@dataclass
class SaddleSystem:
    A_block: sparse.csr_matrix      # (n_sigma, n_sigma)
    B_block: sparse.csr_matrix      # (n_u, n_sigma)
    rhs_stress: np.ndarray
    rhs_disp: np.ndarray

    @property
    def n_sigma(self) -> int:
        return self.A_block.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_block.shape[0]

    def matrix(self) -> sparse.csc_matrix:
        return sparse.bmat([[self.A_block, self.B_block.T], [self.B_block, None]], format="csc")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_stress, self.rhs_disp])


def _check_spaces(cm: CurvedMesh, *spaces):
    for sp in spaces:
        if sp is not None and sp.cm is not cm:
            raise AssemblyError("space built on a different curved mesh")


def _pool_map(fn, items, workers: int):
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _coo(blocks, shape) -> sparse.csr_matrix:
    """Deterministic merge of per-element (rows, cols, values) blocks."""
    if not blocks:
        return sparse.csr_matrix(shape)
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    vals = np.concatenate([b[2] for b in blocks])
    return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _block(rows: np.ndarray, cols: np.ndarray, local: np.ndarray):
    R, C = np.meshgrid(rows, cols, indexing="ij")
    return R.ravel(), C.ravel(), local.ravel()


def _vector_modes(phi: np.ndarray) -> np.ndarray:
    """Scalar modes (n, N) -> vector basis values (n, 2, 2N), component-major."""
    n, N = phi.shape
    out = np.zeros((n, 2, 2 * N))
    out[:, 0, :N] = phi
    out[:, 1, N:] = phi
    return out


# ============================================================================
# EDGES
# ============================================================================

def ccw_edge_points(i: int, s: np.ndarray) -> np.ndarray:
    """Reference points on local edge i traversed counterclockwise."""
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a, b = (i + 1) % 3, (i + 2) % 3
    return np.outer(1.0 - s, ref[a]) + np.outer(s, ref[b]), ref[b] - ref[a]


def oriented_edge_points(cm: CurvedMesh, t: int, i: int, s: np.ndarray):
    """Reference points on local edge i from the lower to the higher global vertex."""
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    e0, e1 = LOCAL_EDGES[i]
    tri = cm.triangles[t]
    a, b = (e0, e1) if tri[e0] < tri[e1] else (e1, e0)
    return np.outer(1.0 - s, ref[a]) + np.outer(s, ref[b]), ref[b] - ref[a]


def edge_geometry(cm: CurvedMesh, t: int, pts: np.ndarray, direction: np.ndarray):
    """Mapped points, edge tangent g'(s) and unit normal (rotated by -90 degrees)."""
    F, JF, _ = cm.maps[t].evaluate(pts)
    tangent = JF @ direction
    speed = np.linalg.norm(tangent, axis=1)
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / speed[:, None]
    return F, JF, tangent, speed, normal


def _outward(cm: CurvedMesh, t: int, F: np.ndarray, normal: np.ndarray) -> np.ndarray:
    centroid = cm.base.vertices[cm.triangles[t]].mean(axis=0)
    sign = np.sign(np.sum((F.mean(axis=0) - centroid) * normal.mean(axis=0)))
    return normal if sign >= 0 else -normal


def boundary_edge_slots(cm: CurvedMesh) -> List[Tuple[int, int]]:
    """(element, local edge) for every boundary edge of the base mesh."""
    mesh = cm.base
    out = []
    for e in mesh.boundary_edges:
        t = int(mesh.edge_triangles[e, 0])
        i = int(np.flatnonzero(cm.local_edges(t) == e)[0])
        out.append((t, i))
    return out


# ============================================================================
# SYSTEM ASSEMBLY
# ============================================================================

def assemble_system(cm: CurvedMesh, exact_map: ExactMap, stress_space: StressSpace,
                    disp_space: DisplacementSpace, law: MaterialLaw,
                    load_f: Optional[Field], boundary_g: Optional[Field],
                    rule: Optional[QuadratureRule] = None, edge_degree: Optional[int] = None,
                    workers: int = DEFAULT_WORKERS) -> SaddleSystem:
    """Blocks A, B and both right-hand sides of the curved mixed problem."""
    _check_spaces(cm, stress_space, disp_space)
    if exact_map.cm is not cm:
        raise AssemblyError("exact map built on a different curved mesh")
    k, m = stress_space.k, cm.degree_m
    rule = rule or triangle_rule(assembly_degree(k, m))
    erule = edge_rule(edge_degree if edge_degree is not None else assembly_degree(k, m))
    table = tabulate(stress_space, rule)
    Mc = law.compliance_matrix
    n_sigma, n_u = stress_space.n_dofs, disp_space.n_dofs

    def element(t: int):
        fmap = cm.maps[t].evaluate(rule.points)
        tab = table.element(t, fmap)
        wdet = rule.weights * tab.det
        A_loc = np.einsum("q,qcr,cd,qds->rs", wdet, tab.values, Mc, tab.values)
        phi, _ = mode_values(int(disp_space.degrees[t]), rule.points)
        vb = _vector_modes(phi)
        B_loc = np.einsum("q,qia,qir->ar", wdet, vb, tab.divergence)
        udofs = disp_space.element_dofs(t)
        f_loc = np.zeros(len(udofs))
        if load_f is not None:
            G, _, _, detPsi = exact_map.evaluate(t, rule.points, fmap=fmap)
            f = np.asarray(load_f(G), dtype=float)
            f_loc = -np.einsum("q,qi,qia->a", wdet * detPsi, f, vb)
        return _block(tab.dofs, tab.dofs, A_loc), _block(udofs, tab.dofs, B_loc), (udofs, f_loc)

    results = _pool_map(element, range(cm.n_triangles), workers)
    A = _coo([r[0] for r in results], (n_sigma, n_sigma))
    B = _coo([r[1] for r in results], (n_u, n_sigma))
    rhs_disp = np.zeros(n_u)
    for udofs, f_loc in (r[2] for r in results):
        rhs_disp[udofs] += f_loc

    rhs_stress = np.zeros(n_sigma)
    if boundary_g is not None:
        for t, i in boundary_edge_slots(cm):
            rows, vals = _boundary_term(cm, exact_map, stress_space, t, i, erule, boundary_g)
            np.add.at(rhs_stress, rows, vals)

    logger.info(f"Assembled saddle system: n_sigma={n_sigma}, n_u={n_u}, nnz(A)={A.nnz}, nnz(B)={B.nnz}")
    return SaddleSystem(A, B, rhs_stress, rhs_disp)


def _boundary_term(cm, exact_map, stress_space, t, i, erule, boundary_g):
    pts, direction = ccw_edge_points(i, erule.points)
    F, _, tangent, speed, normal = edge_geometry(cm, t, pts, direction)
    normal = _outward(cm, t, F, normal)
    G = exact_map.evaluate(t, pts)[0]
    g = np.asarray(boundary_g(G), dtype=float)
    el = stress_space.elements[t]
    Q, _, _ = monomials(el.degree, pts)
    vals = np.einsum("xa,car->xcr", Q, el.reduced_coefficients)        # (n, 3, n_red)
    # (tau nu) . g with tau in components
    tn = np.stack([vals[:, 0] * normal[:, 0:1] + vals[:, 1] * normal[:, 1:2],
                   vals[:, 1] * normal[:, 0:1] + vals[:, 2] * normal[:, 1:2]], axis=1)
    contrib = np.einsum("q,qir,qi->r", erule.weights * speed, tn, g)
    return el.dofs, contrib


# ============================================================================
# PROJECTION AND POSTPROCESSING
# ============================================================================

def _mass_and_rhs(disp_space, t, rule, fmap, values):
    phi, _ = mode_values(int(disp_space.degrees[t]), rule.points)
    vb = _vector_modes(phi)
    wdet = rule.weights * fmap[2]
    M = np.einsum("q,qia,qib->ab", wdet, vb, vb)
    b = np.einsum("q,qia,qi->a", wdet, vb, values)
    return M, b


def l2_project(disp_space: DisplacementSpace, cm: CurvedMesh, field: Field,
               exact_map: Optional[ExactMap] = None, rule: Optional[QuadratureRule] = None,
               workers: int = DEFAULT_WORKERS) -> np.ndarray:
    """Elementwise L2(K^m) projection. With an exact map the field is read at Psi(x)."""
    _check_spaces(cm, disp_space)
    rule = rule or triangle_rule(assembly_degree(disp_space.k, cm.degree_m))

    def element(t: int):
        fmap = cm.maps[t].evaluate(rule.points)
        x = exact_map.evaluate(t, rule.points, fmap=fmap)[0] if exact_map is not None else fmap[0]
        M, b = _mass_and_rhs(disp_space, t, rule, fmap, np.asarray(field(x), dtype=float))
        return np.linalg.solve(M, b)

    out = np.zeros(disp_space.n_dofs)
    for t, c in enumerate(_pool_map(element, range(cm.n_triangles), workers)):
        out[disp_space.element_dofs(t)] = c
    return out


def _strain_modes(q: int, pts: np.ndarray, JF: np.ndarray) -> np.ndarray:
    """Symmetric gradients (n, 3, 2N) of vector modes, physical, in (11, 12, 22) components."""
    _, dphi = mode_values(q, pts)                          # (n, N, 2)
    grad = np.einsum("nas,nsj->naj", dphi, np.linalg.inv(JF))
    N = dphi.shape[1]
    eps = np.zeros((len(pts), 3, 2 * N))
    eps[:, 0, :N] = grad[:, :, 0]
    eps[:, 1, :N] = 0.5 * grad[:, :, 1]
    eps[:, 1, N:] = 0.5 * grad[:, :, 0]
    eps[:, 2, N:] = grad[:, :, 1]
    return eps


def postprocess_displacement(sigma_coeffs: np.ndarray, u_coeffs: np.ndarray,
                             stress_space: StressSpace, disp_space: DisplacementSpace,
                             star_space: DisplacementSpace, law: MaterialLaw,
                             rule: Optional[QuadratureRule] = None,
                             workers: int = DEFAULT_WORKERS) -> np.ndarray:
    """Local postprocessed displacement in the degree-raised space.

    Per element: (eps(u*), eps(v)) + (v, phi) = (A sigma_h, eps(v)) and
    (u*, psi) = (u_h, psi); the multiplier phi is discarded.
    """
    cm = stress_space.cm
    _check_spaces(cm, disp_space, star_space)
    rule = rule or triangle_rule(assembly_degree(stress_space.k + 1, cm.degree_m))
    Mc = law.compliance_matrix

    def element(t: int):
        fmap = cm.maps[t].evaluate(rule.points)
        _, JF, det = fmap
        wdet = rule.weights * det
        area = float(np.sum(wdet))
        eps = _strain_modes(int(star_space.degrees[t]), rule.points, JF)
        E = np.einsum("q,qca,cd,qdb->ab", wdet, eps, FROBENIUS, eps)

        sig = stress_values(stress_space, sigma_coeffs, t, rule.points)
        sig_c = np.stack([sig[:, 0, 0], sig[:, 0, 1], sig[:, 1, 1]], axis=1)
        r1 = np.einsum("q,qc,cd,qda->a", wdet, sig_c, Mc, eps)

        vs = _vector_modes(mode_values(int(star_space.degrees[t]), rule.points)[0])
        vl = _vector_modes(mode_values(int(disp_space.degrees[t]), rule.points)[0])
        N = np.einsum("q,qia,qib->ab", wdet, vl, vs) / area
        r2 = np.einsum("q,qia,qib->ab", wdet, vl, vl) @ u_coeffs[disp_space.element_dofs(t)] / area

        n1, n2 = E.shape[0], N.shape[0]
        K = np.zeros((n1 + n2, n1 + n2))
        K[:n1, :n1] = E
        K[:n1, n1:] = N.T
        K[n1:, :n1] = N
        cond = np.linalg.cond(K)
        if not np.isfinite(cond) or cond > MAX_LOCAL_CONDITION:
            raise AssemblyError(f"element {t}: postprocessing system ill-conditioned (cond {cond:.3e})")
        return np.linalg.solve(K, np.concatenate([r1, r2]))[:n1]

    out = np.zeros(star_space.n_dofs)
    for t, c in enumerate(_pool_map(element, range(cm.n_triangles), workers)):
        out[star_space.element_dofs(t)] = c
    return out


# ============================================================================
# GRAMS AND NORMS
# ============================================================================

def hdiv_gram(stress_space: StressSpace, rule: Optional[QuadratureRule] = None,
              workers: int = DEFAULT_WORKERS) -> sparse.csr_matrix:
    """int tau:sigma + div tau . div sigma."""
    cm = stress_space.cm
    rule = rule or triangle_rule(assembly_degree(stress_space.k, cm.degree_m))
    table = tabulate(stress_space, rule)

    def element(t: int):
        tab = table.element(t)
        wdet = rule.weights * tab.det
        X = np.einsum("q,qcr,cd,qds->rs", wdet, tab.values, FROBENIUS, tab.values)
        X += np.einsum("q,qir,qis->rs", wdet, tab.divergence, tab.divergence)
        return _block(tab.dofs, tab.dofs, X)

    n = stress_space.n_dofs
    return _coo(_pool_map(element, range(cm.n_triangles), workers), (n, n))


def mass_gram(disp_space: DisplacementSpace, rule: Optional[QuadratureRule] = None,
              workers: int = DEFAULT_WORKERS) -> sparse.csr_matrix:
    cm = disp_space.cm
    rule = rule or triangle_rule(assembly_degree(disp_space.k, cm.degree_m))

    def element(t: int):
        fmap = cm.maps[t].evaluate(rule.points)
        M, _ = _mass_and_rhs(disp_space, t, rule, fmap, np.zeros((len(rule), 2)))
        dofs = disp_space.element_dofs(t)
        return _block(dofs, dofs, M)

    n = disp_space.n_dofs
    return _coo(_pool_map(element, range(cm.n_triangles), workers), (n, n))


def _stress_trace_gram(stress_space: StressSpace, erule: QuadratureRule):
    """sum_E h_E ||tau nu||_E^2, each edge once, read from its first neighbour."""
    cm = stress_space.cm
    mesh = cm.base
    lengths = mesh.edge_lengths()
    blocks = []
    for e in range(mesh.n_edges):
        t = int(mesh.edge_triangles[e, 0])
        i = int(np.flatnonzero(cm.local_edges(t) == e)[0])
        pts, direction = oriented_edge_points(cm, t, i, erule.points)
        _, _, _, speed, normal = edge_geometry(cm, t, pts, direction)
        el = stress_space.elements[t]
        Q, _, _ = monomials(el.degree, pts)
        vals = np.einsum("xa,car->xcr", Q, el.reduced_coefficients)
        tn = np.stack([vals[:, 0] * normal[:, 0:1] + vals[:, 1] * normal[:, 1:2],
                       vals[:, 1] * normal[:, 0:1] + vals[:, 2] * normal[:, 1:2]], axis=1)
        X = lengths[e] * np.einsum("q,qir,qis->rs", erule.weights * speed, tn, tn)
        blocks.append(_block(el.dofs, el.dofs, X))
    return blocks


def _jump_gram(disp_space: DisplacementSpace, erule: QuadratureRule):
    """sum_E h_E^{-1} ||[[v]]||_E^2; on boundary edges the jump is the trace itself."""
    cm = disp_space.cm
    mesh = cm.base
    lengths = mesh.edge_lengths()
    blocks = []
    for e in range(mesh.n_edges):
        parts = []
        speed = None
        for side, t in enumerate(mesh.edge_triangles[e]):
            if t < 0:
                continue
            t = int(t)
            i = int(np.flatnonzero(cm.local_edges(t) == e)[0])
            pts, direction = oriented_edge_points(cm, t, i, erule.points)
            if speed is None:
                speed = edge_geometry(cm, t, pts, direction)[3]
            vb = _vector_modes(mode_values(int(disp_space.degrees[t]), pts)[0])
            parts.append((disp_space.element_dofs(t), vb if side == 0 else -vb))
        dofs = np.concatenate([p[0] for p in parts])
        J = np.concatenate([p[1] for p in parts], axis=2)
        X = np.einsum("q,qia,qib->ab", erule.weights * speed, J, J) / lengths[e]
        blocks.append(_block(dofs, dofs, X))
    return blocks


def mesh_dependent_grams(stress_space: StressSpace, disp_space: DisplacementSpace,
                         rule: Optional[QuadratureRule] = None, erule: Optional[QuadratureRule] = None,
                         workers: int = DEFAULT_WORKERS):
    """Grams of ||tau||_{0,h}^2 = ||tau||^2 + sum h_E ||tau nu||^2 and |v|_{1,h}^2 = ||eps_h v||^2 + sum h_E^-1 ||[[v]]||^2."""
    cm = stress_space.cm
    _check_spaces(cm, disp_space)
    k, m = stress_space.k, cm.degree_m
    rule = rule or triangle_rule(assembly_degree(k, m))
    erule = erule or edge_rule(assembly_degree(k, m))
    table = tabulate(stress_space, rule)

    def element(t: int):
        fmap = cm.maps[t].evaluate(rule.points)
        tab = table.element(t, fmap)
        wdet = rule.weights * tab.det
        Xs = np.einsum("q,qcr,cd,qds->rs", wdet, tab.values, FROBENIUS, tab.values)
        eps = _strain_modes(int(disp_space.degrees[t]), rule.points, fmap[1])
        Xv = np.einsum("q,qca,cd,qdb->ab", wdet, eps, FROBENIUS, eps)
        udofs = disp_space.element_dofs(t)
        return _block(tab.dofs, tab.dofs, Xs), _block(udofs, udofs, Xv)

    results = _pool_map(element, range(cm.n_triangles), workers)
    ns, nu = stress_space.n_dofs, disp_space.n_dofs
    X = _coo([r[0] for r in results] + _stress_trace_gram(stress_space, erule), (ns, ns))
    M = _coo([r[1] for r in results] + _jump_gram(disp_space, erule), (nu, nu))
    return X, M


def mesh_dependent_norms(coeffs: np.ndarray, stress_space: StressSpace, disp_space: DisplacementSpace,
                         kind: str = "stress", erule: Optional[QuadratureRule] = None) -> float:
    """||tau||_{0,h,m} (kind="stress") or |v|_{1,h,m} (kind="displacement")."""
    if kind not in ("stress", "displacement"):
        raise AssemblyError(f"unknown norm kind '{kind}'")
    X, M = mesh_dependent_grams(stress_space, disp_space, erule=erule)
    G = X if kind == "stress" else M
    if G.shape[0] != len(coeffs):
        raise AssemblyError(f"{kind} coefficients have length {len(coeffs)}, space has {G.shape[0]}")
    return float(np.sqrt(max(coeffs @ (G @ coeffs), 0.0)))
