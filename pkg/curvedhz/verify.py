"""
Manufactured solutions, error measurement, rate fitting and convergence studies.

A study builds a mesh sequence by uniform refinement and, per level:
curve the mesh -> build spaces -> assemble -> solve -> postprocess ->
measure five errors. Rates are least-squares slopes of log(err) against
log(h) over the last three levels.

Completed levels are checkpointed (atomic JSON) so an interrupted study can
resume with --resume.
"""

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import jets
from .assembly import (MaterialLaw, assemble_system, hdiv_gram, l2_project, mass_gram,
                       mesh_dependent_grams, postprocess_displacement)
from .curving import ExactMap, build_curved_mesh, build_exact_map
from .errors import ConfigError, MeshError, RateError
from .geometry import BoundaryChart
from .mesh import Triangulation, generate_disk_mesh, uniform_refine, unit_square_mesh, validate_mesh
from .quadrature import error_degree, triangle_rule
from .solver import StabilityReport, infsup_constant, solve_saddle
from .spaces import (DisplacementSpace, StressSpace, build_displacement_space, build_stress_space,
                     displacement_values, n_monomials, tabulate)

logger = logging.getLogger(__name__)

ERROR_KINDS = ["err_u", "err_u_star", "err_sigma", "err_div", "err_superclose"]
RATE_LEVELS = 3
MAX_STUDY_DOFS = 2_000_000
DEFAULT_WORKERS = 4

# Measured rates of the published disk ("circle") and three-leaf studies,
# keyed (chart, k, m, enriched) -> (u_h, u*_h, sigma_h, div sigma_h)
REFERENCE_RATES: Dict[Tuple[str, int, int, bool], Tuple[float, float, float, float]] = {
    ("circle", 3, 1, False): (1.97, 1.98, 1.54, 1.51),
    ("circle", 3, 2, False): (3.04, 3.50, 2.50, 2.50),
    ("circle", 3, 3, False): (3.03, 4.41, 3.51, 3.14),
    ("circle", 3, 4, False): (3.03, 4.49, 3.51, 3.14),
    ("circle", 4, 1, False): (1.98, 1.98, 1.52, 1.51),
    ("circle", 4, 2, False): (3.50, 3.50, 2.50, 2.49),
    ("circle", 4, 3, False): (4.09, 4.00, 3.51, 3.53),
    ("circle", 4, 4, False): (4.09, 5.50, 4.49, 4.17),
    ("circle", 4, 5, False): (4.09, 5.49, 4.49, 4.18),
    ("circle", 3, 1, True): (2.05, 2.05, 1.58, 1.51),
    ("circle", 3, 2, True): (2.96, 3.53, 2.50, 2.52),
    ("circle", 3, 3, True): (2.93, 4.09, 3.57, 2.94),
    ("circle", 3, 4, True): (2.93, 4.97, 3.97, 2.93),
    ("circle", 4, 1, True): (2.05, 2.05, 1.58, 1.51),
    ("circle", 4, 2, True): (3.54, 3.54, 2.50, 2.49),
    ("circle", 4, 3, True): (3.97, 4.08, 3.52, 3.55),
    ("circle", 4, 4, True): (3.94, 5.68, 4.68, 3.89),
    ("circle", 4, 5, True): (3.94, 5.89, 4.88, 3.88),
    ("three_leaf", 3, 1, False): (1.98, 1.98, 1.54, 1.51),
    ("three_leaf", 3, 2, False): (3.18, 3.52, 2.50, 2.49),
    ("three_leaf", 3, 3, False): (3.13, 4.16, 3.53, 3.31),
    ("three_leaf", 3, 4, False): (3.13, 4.48, 3.52, 3.32),
    ("three_leaf", 4, 1, False): (1.96, 1.96, 1.56, 1.51),
    ("three_leaf", 4, 2, False): (3.52, 3.52, 2.49, 2.49),
    ("three_leaf", 4, 3, False): (4.20, 4.02, 3.50, 3.49),
    ("three_leaf", 4, 4, False): (4.41, 5.46, 4.48, 4.23),
    ("three_leaf", 4, 5, False): (4.41, 5.46, 4.47, 4.22),
    ("three_leaf", 3, 1, True): (2.04, 2.05, 1.59, 1.51),
    ("three_leaf", 3, 2, True): (3.15, 3.55, 2.49, 2.50),
    ("three_leaf", 3, 3, True): (2.89, 4.08, 3.53, 3.09),
    ("three_leaf", 3, 4, True): (2.89, 5.15, 4.14, 2.95),
    ("three_leaf", 4, 1, True): (1.97, 1.97, 1.61, 1.51),
    ("three_leaf", 4, 2, True): (3.54, 3.54, 2.49, 2.49),
    ("three_leaf", 4, 3, True): (4.00, 4.01, 3.52, 3.47),
    ("three_leaf", 4, 4, True): (3.90, 5.53, 4.48, 4.20),
    ("three_leaf", 4, 5, True): (3.86, 5.99, 5.17, 4.16),
}
DEFAULT_RATE_TOLERANCE = {"circle": 0.3, "three_leaf": 0.35}


# ============================================================================
# MANUFACTURED SOLUTIONS
# ============================================================================

JetField = Callable[[jets.Jet, jets.Jet], Tuple[jets.Jet, jets.Jet]]


def _exp_trig_field(x, y):
    return jets.exp(x * y) * jets.cos(x), jets.exp(y) * jets.sin(x + y)


def _linear_patch(x, y):
    return (x + 2 * y) * 0.1, (3 * x - y) * 0.1


def polynomial_field(terms_u1: Sequence[Sequence[float]], terms_u2: Sequence[Sequence[float]]) -> JetField:
    """Field from (a, b, coefficient) triples: u_i = sum c x^a y^b."""

    def _component(x, y, terms):
        total = jets.Jet.constant(0.0, 2, x.val.shape)
        for a, b, c in terms:
            total = total + (x ** int(a)) * (y ** int(b)) * float(c)
        return total

    return lambda x, y: (_component(x, y, terms_u1), _component(x, y, terms_u2))


BUILTIN_SOLUTIONS: Dict[str, JetField] = {
    "paper_solution": _exp_trig_field,
    "linear_patch": _linear_patch,
}


@dataclass
class ManufacturedSolution:
    name: str
    law: MaterialLaw
    expr: JetField

    def _jets(self, pts) -> List[jets.Jet]:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x = jets.Jet.variable(pts[:, 0], 0, 2)
        y = jets.Jet.variable(pts[:, 1], 1, 2)
        return [u if isinstance(u, jets.Jet) else x._lift(u) for u in self.expr(x, y)]

    def u(self, pts) -> np.ndarray:
        u1, u2 = self._jets(pts)
        return np.column_stack([u1.val, u2.val])

    def grad_u(self, pts) -> np.ndarray:
        """(n, 2, 2), [i, j] = d u_i / d x_j."""
        return np.stack([ui.grad.T for ui in self._jets(pts)], axis=1)

    def strain(self, pts) -> np.ndarray:
        g = self.grad_u(pts)
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def sigma(self, pts) -> np.ndarray:
        return self.law.apply_C(self.strain(pts))

    def grad_sigma(self, pts) -> np.ndarray:
        """(n, 2, 2, 2), [i, j, l] = d sigma_ij / d x_l."""
        H = np.stack([np.moveaxis(ui.hess, -1, 0) for ui in self._jets(pts)], axis=1)   # (n, i, j, l)
        deps = 0.5 * (H + np.swapaxes(H, 1, 2))
        dtr = deps[:, 0, 0, :] + deps[:, 1, 1, :]
        return 2 * self.law.mu * deps + self.law.lam * np.eye(2)[None, :, :, None] * dtr[:, None, None, :]

    def div_sigma(self, pts) -> np.ndarray:
        return np.einsum("nijj->ni", self.grad_sigma(pts))

    def f(self, pts) -> np.ndarray:
        return -self.div_sigma(pts)


def make_manufactured(u_expr: Union[str, JetField, dict], law: Optional[MaterialLaw] = None) -> ManufacturedSolution:
    """Builtin name, jet callable, or {"u1": [(a, b, c), ...], "u2": [...]} polynomial."""
    law = law or MaterialLaw()
    if isinstance(u_expr, str):
        if u_expr not in BUILTIN_SOLUTIONS:
            raise ConfigError(f"unknown solution '{u_expr}' (known: {', '.join(sorted(BUILTIN_SOLUTIONS))})")
        return ManufacturedSolution(u_expr, law, BUILTIN_SOLUTIONS[u_expr])
    if isinstance(u_expr, dict):
        return ManufacturedSolution("polynomial", law, polynomial_field(u_expr.get("u1", []), u_expr.get("u2", [])))
    if callable(u_expr):
        return ManufacturedSolution(getattr(u_expr, "__name__", "custom"), law, u_expr)
    raise ConfigError(f"cannot build a manufactured solution from {type(u_expr).__name__}")


# ============================================================================
# ERRORS AND RATES
# ============================================================================

@dataclass
class ErrorReport:
    err_u: float
    err_u_star: float
    err_sigma: float
    err_div: float
    err_superclose: float
    h: float = float("nan")
    n_triangles: int = 0
    n_dofs: int = 0

    def get(self, kind: str) -> float:
        return float(getattr(self, kind))


def compute_errors(solution: ManufacturedSolution, sigma_coeffs: np.ndarray, u_coeffs: np.ndarray,
                   stress_space: StressSpace, disp_space: DisplacementSpace, exact_map: ExactMap,
                   u_star_coeffs: Optional[np.ndarray] = None, star_space: Optional[DisplacementSpace] = None,
                   rule=None, workers: int = DEFAULT_WORKERS) -> ErrorReport:
    """L2(Omega^m) errors of the discrete solution against the pulled-back exact fields."""
    cm = stress_space.cm
    rule = rule or triangle_rule(error_degree(stress_space.k, cm.degree_m))
    table = tabulate(stress_space, rule)
    qhu = l2_project(disp_space, cm, solution.u, exact_map=exact_map, rule=rule, workers=workers)

    def element(t: int) -> np.ndarray:
        fmap = cm.maps[t].evaluate(rule.points)
        G, _, JPsi, _ = exact_map.evaluate(t, rule.points, fmap=fmap)
        tab = table.element(t, fmap)
        wdet = rule.weights * tab.det
        local = sigma_coeffs[tab.dofs]

        u_exact = solution.u(G)
        sig_exact = solution.sigma(G)
        # div of sigma o Psi: (d_l sigma_ij)(Psi) dPsi_l/dx_j
        div_exact = np.einsum("nijl,nlj->ni", solution.grad_sigma(G), JPsi)

        sh = tab.values @ local
        sig_h = np.stack([sh[:, 0], sh[:, 1], sh[:, 2]], axis=1)
        d_sig = np.stack([sig_exact[:, 0, 0], sig_exact[:, 0, 1], sig_exact[:, 1, 1]], axis=1) - sig_h
        e_sigma = np.sum(wdet * (d_sig[:, 0] ** 2 + 2 * d_sig[:, 1] ** 2 + d_sig[:, 2] ** 2))
        e_div = np.sum(wdet * np.sum((div_exact - tab.divergence @ local) ** 2, axis=1))

        u_h = displacement_values(disp_space, u_coeffs, t, rule.points)
        e_u = np.sum(wdet * np.sum((u_exact - u_h) ** 2, axis=1))
        q_h = displacement_values(disp_space, qhu, t, rule.points)
        e_sc = np.sum(wdet * np.sum((q_h - u_h) ** 2, axis=1))
        e_star = 0.0
        if u_star_coeffs is not None:
            u_s = displacement_values(star_space, u_star_coeffs, t, rule.points)
            e_star = np.sum(wdet * np.sum((u_exact - u_s) ** 2, axis=1))
        return np.array([e_u, e_star, e_sigma, e_div, e_sc])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        totals = np.sum(list(pool.map(element, range(cm.n_triangles))), axis=0)
    err = np.sqrt(np.maximum(totals, 0.0))
    if u_star_coeffs is None:
        err[1] = float("nan")
    return ErrorReport(*[float(v) for v in err], h=cm.base.h, n_triangles=cm.n_triangles,
                       n_dofs=stress_space.n_dofs + disp_space.n_dofs)


def fit_rates(levels: Sequence[Tuple[float, float]]) -> float:
    """Least-squares slope of log(err) against log(h) over the last three levels."""
    if len(levels) < RATE_LEVELS:
        raise RateError(f"need at least {RATE_LEVELS} levels to fit a rate, got {len(levels)}")
    h = np.array([lv[0] for lv in levels[-RATE_LEVELS:]], dtype=float)
    err = np.array([lv[1] for lv in levels[-RATE_LEVELS:]], dtype=float)
    if np.any(~np.isfinite(err)) or np.any(err <= 0.0) or np.any(h <= 0.0):
        raise RateError(f"rates need positive errors and mesh sizes, got errors {err.tolist()}")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def rates_from_reports(reports: Sequence[ErrorReport]) -> Dict[str, float]:
    out = {}
    for kind in ERROR_KINDS:
        pairs = [(r.h, r.get(kind)) for r in reports]
        try:
            out[kind] = fit_rates(pairs)
        except RateError as e:
            logger.warning(f"No rate for {kind}: {e}")
            out[kind] = float("nan")
    return out


def theoretical_rates(k: int, m: int, enriched: bool = False) -> Dict[str, float]:
    """Predicted orders for smooth solutions."""
    return {
        "err_u": min(k, m + 1),
        "err_u_star": min(k + 2, m + 1) if enriched else min(k + 1.5, m + 1),
        "err_sigma": min(k + 1, m + 0.5) if enriched else min(k + 0.5, m + 0.5),
        "err_div": min(k, m + 0.5),
        "err_superclose": min(k + 2, m + 1) if enriched else min(k + 1.5, m + 1),
    }


def reference_rates(chart_name: Optional[str], k: int, m: int, enriched: bool) -> Optional[Dict[str, float]]:
    key = (chart_name, k, m, enriched)
    if key not in REFERENCE_RATES:
        return None
    return dict(zip(["err_u", "err_u_star", "err_sigma", "err_div"], REFERENCE_RATES[key]))


def check_rates(rates: Dict[str, float], targets: Dict[str, float], tolerance: float) -> List[str]:
    """Messages for every rate outside target +- tolerance."""
    failures = []
    for kind, target in targets.items():
        measured = rates.get(kind, float("nan"))
        if not np.isfinite(measured) or abs(measured - target) > tolerance:
            failures.append(f"{kind}: measured {measured:.3f}, target {target:.2f} +- {tolerance:.2f}")
    return failures


# ============================================================================
# CHECKPOINT
# ============================================================================

class StudyCheckpoint:
    """Save/load completed study levels to survive interruptions."""

    def __init__(self, path: str, fingerprint: str):
        self.path = path
        self.fingerprint = fingerprint
        self.completed: Dict[str, dict] = {}

    def load(self) -> bool:
        """Load checkpoint from disk. Returns True if loaded."""
        if os.path.exists(self.path):
            try:
                with open(self.path, "r") as f:
                    data = json.load(f)
                if data.get("fingerprint") == self.fingerprint:
                    self.completed = data.get("completed", {})
                    logger.info(f"Loaded checkpoint: {len(self.completed)} levels done")
                    return True
                logger.info("Checkpoint from a different configuration, starting fresh")
            except (json.JSONDecodeError, KeyError) as e:
                logger.warning(f"Corrupt checkpoint, starting fresh: {e}")
        return False

    def save(self):
        data = {
            "fingerprint": self.fingerprint,
            "updated_at": datetime.utcnow().isoformat(),
            "completed": self.completed,
        }
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        # Atomic write: write to temp then rename
        tmp_path = self.path + ".tmp"
        with open(tmp_path, "w") as f:
            json.dump(data, f, indent=2)
        os.replace(tmp_path, self.path)

    def mark_done(self, level: int, report: ErrorReport):
        self.completed[str(level)] = asdict(report)
        self.save()

    def is_done(self, level: int) -> bool:
        return str(level) in self.completed

    def get_result(self, level: int) -> Optional[ErrorReport]:
        if self.is_done(level):
            return ErrorReport(**self.completed[str(level)])
        return None

    def cleanup(self):
        if os.path.exists(self.path):
            os.remove(self.path)
            logger.info("Checkpoint cleaned up")


def study_fingerprint(**config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ============================================================================
# STUDIES
# ============================================================================

@dataclass
class LevelResult:
    errors: ErrorReport
    relative_residual: float


@dataclass
class ConvergenceReport:
    levels: List[ErrorReport]
    rates: Dict[str, float]
    theoretical: Dict[str, float]
    reference: Optional[Dict[str, float]] = None
    config: Dict[str, object] = field(default_factory=dict)


# charts the ring mesher handles; graded meshes for the others come from Gmsh files
BUILTIN_MESHED_CHARTS = ("circle",)


def base_mesh_for(chart: Optional[BoundaryChart], initial_h: float) -> Triangulation:
    if chart is None:
        return unit_square_mesh(max(1, int(round(1.0 / initial_h))))
    if chart.name not in BUILTIN_MESHED_CHARTS:
        raise ConfigError(f"no builtin mesher for chart '{chart.name}'; pass a graded Gmsh file with --msh "
                          f"(e.g. meshes/{chart.name}_0.msh)")
    return generate_disk_mesh(chart, initial_h)


def mesh_sequence(base: Triangulation, chart: Optional[BoundaryChart], n_levels: int) -> List[Triangulation]:
    meshes = [base]
    for _ in range(n_levels - 1):
        meshes.append(uniform_refine(meshes[-1], chart))
    return meshes


def _projected_dofs(n_triangles: int, k: int, enriched: bool) -> int:
    p = k + 1 if enriched else k
    return n_triangles * (3 * n_monomials(p) + 2 * n_monomials(p + 1))


def solve_level(mesh: Triangulation, chart: Optional[BoundaryChart], k: int, m: int, enriched: bool,
                solution: ManufacturedSolution, quad_degree: Optional[int] = None,
                solver_tol: float = 1e-10, workers: int = DEFAULT_WORKERS) -> LevelResult:
    """Full pipeline on one mesh: curve, build, assemble, solve, postprocess, measure."""
    report = validate_mesh(mesh)
    if report.degenerate_triangles:
        raise MeshError(f"triangles {report.degenerate_triangles[:10]} have nonpositive area")
    if chart is not None and not report.boundary_shape_ok:
        raise ConfigError(f"triangles {report.offending_triangles[:10]} have three boundary vertices "
                          f"or two boundary edges; refine the starting mesh")
    cm = build_curved_mesh(mesh, chart, m)
    exact = build_exact_map(cm, chart)
    stress = build_stress_space(cm, k, enriched, workers=workers)
    disp = build_displacement_space(cm, k, enriched)
    star = build_displacement_space(cm, k, enriched, star=True)
    rule = triangle_rule(quad_degree) if quad_degree else None
    system = assemble_system(cm, exact, stress, disp, solution.law, solution.f, solution.u,
                             rule=rule, edge_degree=quad_degree, workers=workers)
    result = solve_saddle(system, tol=solver_tol)
    u_star = postprocess_displacement(result.sigma_coeffs, result.u_coeffs, stress, disp, star,
                                      solution.law, workers=workers)
    errors = compute_errors(solution, result.sigma_coeffs, result.u_coeffs, stress, disp, exact,
                            u_star_coeffs=u_star, star_space=star, workers=workers)
    logger.info(f"Level h={errors.h:.4f} N_T={errors.n_triangles}: err_u={errors.err_u:.3e} "
                f"err_u*={errors.err_u_star:.3e} err_sigma={errors.err_sigma:.3e} "
                f"err_div={errors.err_div:.3e} err_Qh={errors.err_superclose:.3e}")
    return LevelResult(errors, result.relative_residual)


def run_study(chart: Optional[BoundaryChart], k: int, m: int, enriched: bool, n_levels: int,
              initial_h: float = 1.0 / 3.0, solution: Optional[ManufacturedSolution] = None,
              base_mesh: Optional[Triangulation] = None, quad_degree: Optional[int] = None,
              solver_tol: float = 1e-10, workers: int = DEFAULT_WORKERS,
              checkpoint: Optional[StudyCheckpoint] = None) -> ConvergenceReport:
    """Convergence study over n_levels uniformly refined meshes."""
    if n_levels < 1:
        raise ConfigError(f"a study needs at least one level, got {n_levels}")
    solution = solution or make_manufactured("paper_solution")
    base = base_mesh if base_mesh is not None else base_mesh_for(chart, initial_h)
    projected = _projected_dofs(base.n_triangles * 4 ** (n_levels - 1), k, enriched)
    if projected > MAX_STUDY_DOFS:
        raise ConfigError(f"finest level would need ~{projected} DOFs (limit {MAX_STUDY_DOFS}); use fewer levels")

    meshes = mesh_sequence(base, chart, n_levels)
    reports: List[ErrorReport] = []
    for level, mesh in enumerate(meshes):
        if checkpoint is not None and checkpoint.is_done(level):
            logger.info(f"Level {level} already done, skipping")
            reports.append(checkpoint.get_result(level))
            continue
        logger.info(f"Level {level}: {mesh.n_triangles} triangles")
        res = solve_level(mesh, chart, k, m, enriched, solution, quad_degree, solver_tol, workers)
        reports.append(res.errors)
        if checkpoint is not None:
            checkpoint.mark_done(level, res.errors)

    rates = rates_from_reports(reports) if len(reports) >= RATE_LEVELS else {}
    chart_name = chart.name if chart is not None else None
    config = {"chart": chart_name, "k": k, "m": m, "enriched": enriched, "levels": n_levels,
              "solution": solution.name}
    return ConvergenceReport(reports, rates, theoretical_rates(k, m, enriched),
                             reference_rates(chart_name, k, m, enriched), config)


def run_infsup_study(chart: Optional[BoundaryChart], k: int, m: int, n_levels: int,
                     initial_h: float = 0.5, norm_kind: str = "Hdiv-L2",
                     base_mesh: Optional[Triangulation] = None,
                     workers: int = DEFAULT_WORKERS) -> List[StabilityReport]:
    """beta_h (and alpha_h) on each level of a refinement sequence."""
    if norm_kind not in ("Hdiv-L2", "mesh-dependent"):
        raise ConfigError(f"unknown norm kind '{norm_kind}'")
    base = base_mesh if base_mesh is not None else base_mesh_for(chart, initial_h)
    out = []
    for level, mesh in enumerate(mesh_sequence(base, chart, n_levels)):
        cm = build_curved_mesh(mesh, chart, m)
        exact = build_exact_map(cm, chart)
        stress = build_stress_space(cm, k, workers=workers)
        disp = build_displacement_space(cm, k)
        system = assemble_system(cm, exact, stress, disp, MaterialLaw(), None, None, workers=workers)
        if norm_kind == "Hdiv-L2":
            X, M = hdiv_gram(stress, workers=workers), mass_gram(disp, workers=workers)
        else:
            X, M = mesh_dependent_grams(stress, disp, workers=workers)
        out.append(infsup_constant(X, M, system.B_block, A=system.A_block, norm_kind=norm_kind,
                                   level=level, h=mesh.h, m=m, k=k))
    return out


# ============================================================================
# OUTPUT
# ============================================================================

CONVERGENCE_COLUMNS = ["level", "h", "n_triangles", "n_dofs"] + ERROR_KINDS


def write_convergence_csv(report: ConvergenceReport, path: str):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CONVERGENCE_COLUMNS)
        for level, r in enumerate(report.levels):
            w.writerow([level, f"{r.h:.6e}", r.n_triangles, r.n_dofs] + [f"{r.get(k):.10e}" for k in ERROR_KINDS])
        if report.rates:
            w.writerow(["rates", "", "", ""] + [f"{report.rates.get(k, float('nan')):.4f}" for k in ERROR_KINDS])


def write_stability_csv(reports: Sequence[StabilityReport], path: str):
    from .solver import STABILITY_COLUMNS
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(STABILITY_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())


def format_rates_table(report: ConvergenceReport) -> str:
    lines = [f"{'kind':<16}{'measured':>10}{'theory':>10}{'reference':>11}"]
    for kind in ERROR_KINDS:
        ref = (report.reference or {}).get(kind)
        ref_s = f"{ref:>11.2f}" if ref is not None else f"{'-':>11}"
        lines.append(f"{kind:<16}{report.rates.get(kind, float('nan')):>10.3f}"
                     f"{report.theoretical[kind]:>10.2f}{ref_s}")
    return "\n".join(lines)
