"""
Command-line front end.

Commands:
    solve        one level: mesh -> curve -> solve -> errors (CSV)
    study        convergence study over uniformly refined levels (CSV, rates, SVG)
    infsup       discrete inf-sup / kernel coercivity constants per level (CSV)
    mesh-report  counts, minimum angle and boundary-shape check of a mesh (JSON)
    geometry     sup|F - I| and sup|Psi - I| per geometric order (CSV)

Exit codes:
    0 = success
    1 = runtime error (invalid input, singular system, I/O)
    2 = fitted rates outside tolerance with --assert-rates
"""

import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import datetime
from typing import List, Optional

from .assembly import MaterialLaw
from .config import RunConfig, parse_config
from .curving import geometric_report
from .errors import CurvedHZError
from .geometry import BoundaryChart, make_builtin_chart
from .mesh import Triangulation, read_gmsh, validate_mesh
from .verify import (DEFAULT_RATE_TOLERANCE, ConvergenceReport, StudyCheckpoint, base_mesh_for, check_rates,
                     format_rates_table, make_manufactured, run_infsup_study, run_study, solve_level,
                     study_fingerprint, write_convergence_csv, write_stability_csv)

logger = logging.getLogger("curvedhz")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_RATES = 2
STRAIGHT_CHART = "none"


def setup_logging(log_dir: str, verbose: bool = False):
    os.makedirs(log_dir, exist_ok=True)
    log_file = os.path.join(log_dir, f"curvedhz_{datetime.utcnow().strftime('%Y-%m-%d')}.log")

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s [%(levelname)s] %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stdout),
        ]
    )


# ============================================================================
# INPUTS
# ============================================================================

def load_chart(config: RunConfig) -> Optional[BoundaryChart]:
    if config.chart is None or config.chart == STRAIGHT_CHART:
        return None
    return make_builtin_chart(config.chart)


def load_mesh(config: RunConfig, chart: Optional[BoundaryChart]) -> Triangulation:
    if config.msh:
        with open(config.msh, "rb") as f:
            mesh = read_gmsh(f.read(), chart)
        logger.info(f"Read {config.msh}: {mesh.n_triangles} triangles")
        return mesh
    return base_mesh_for(chart, config.initial_h)


def _tag(config: RunConfig) -> str:
    chart = config.chart or STRAIGHT_CHART
    if config.msh:
        chart = os.path.splitext(os.path.basename(config.msh))[0]
    tag = f"{chart}_k{config.k}_m{config.m}"
    return tag + "_enriched" if config.enriched else tag


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_solve(config: RunConfig) -> int:
    chart = load_chart(config)
    mesh = load_mesh(config, chart)
    solution = make_manufactured(config.solution, MaterialLaw(config.lam, config.mu))
    result = solve_level(mesh, chart, config.k, config.m, config.enriched, solution,
                         config.quad_degree, config.solver_tol, config.workers)
    report = ConvergenceReport([result.errors], {}, {}, None,
                               {"chart": config.chart, "k": config.k, "m": config.m, "enriched": config.enriched})
    path = os.path.join(config.output_dir, f"solve_{_tag(config)}.csv")
    write_convergence_csv(report, path)
    logger.info(f"Relative residual {result.relative_residual:.2e}; wrote {path}")
    return EXIT_OK


def cmd_study(config: RunConfig) -> int:
    chart = load_chart(config)
    base = load_mesh(config, chart)
    solution = make_manufactured(config.solution, MaterialLaw(config.lam, config.mu))
    tag = _tag(config)

    fingerprint = study_fingerprint(chart=config.chart, msh=config.msh, k=config.k, m=config.m,
                                    enriched=config.enriched, levels=config.levels, initial_h=config.initial_h,
                                    quad_degree=config.quad_degree, solution=config.solution,
                                    lam=config.lam, mu=config.mu)
    checkpoint = StudyCheckpoint(os.path.join(config.output_dir, f".checkpoint_{tag}.json"), fingerprint)
    if config.resume:
        checkpoint.load()

    report = run_study(chart, config.k, config.m, config.enriched, config.levels,
                       initial_h=config.initial_h, solution=solution, base_mesh=base,
                       quad_degree=config.quad_degree, solver_tol=config.solver_tol,
                       workers=config.workers, checkpoint=checkpoint)
    path = os.path.join(config.output_dir, f"study_{tag}.csv")
    write_convergence_csv(report, path)
    logger.info(f"Wrote {path}")
    if config.svg:
        from .plotting import plot_convergence
        plot_convergence(report, os.path.join(config.output_dir, f"study_{tag}.svg"))
    checkpoint.cleanup()

    print(format_rates_table(report))
    if not config.assert_rates:
        return EXIT_OK
    targets = report.reference or {k: v for k, v in report.theoretical.items() if k != "err_superclose"}
    tolerance = config.rate_tolerance
    if tolerance is None:
        tolerance = DEFAULT_RATE_TOLERANCE.get(config.chart, 0.3)
    failures = check_rates(report.rates, targets, tolerance)
    for msg in failures:
        logger.error(f"Rate check failed: {msg}")
    if failures:
        return EXIT_RATES
    logger.info(f"All rates within {tolerance} of target")
    return EXIT_OK


def cmd_infsup(config: RunConfig) -> int:
    chart = load_chart(config)
    base = load_mesh(config, chart)
    reports = run_infsup_study(chart, config.k, config.m, config.levels, norm_kind=config.norm_kind,
                               base_mesh=base, workers=config.workers)
    path = os.path.join(config.output_dir, f"infsup_{_tag(config)}.csv")
    write_stability_csv(reports, path)
    betas = [r.beta_h for r in reports]
    logger.info(f"beta_h per level: {', '.join(f'{b:.4f}' for b in betas)}; wrote {path}")
    return EXIT_OK


def cmd_mesh_report(config: RunConfig) -> int:
    chart = load_chart(config)
    report = validate_mesh(load_mesh(config, chart))
    path = os.path.join(config.output_dir, f"mesh_report_{_tag(config)}.json")
    with open(path, "w") as f:
        json.dump(asdict(report), f, indent=2)
    logger.info(f"{report.n_triangles} triangles, {report.n_vertices} vertices, h={report.h:.4f}, "
                f"min angle {report.min_angle:.1f} deg, boundary shape ok: {report.boundary_shape_ok}")
    if not report.boundary_shape_ok:
        logger.warning(f"{len(report.offending_triangles)} triangles with three boundary vertices "
                       f"or two boundary edges")
    if report.degenerate_triangles:
        logger.warning(f"{len(report.degenerate_triangles)} triangles with nonpositive area")
    return EXIT_OK


def cmd_geometry(config: RunConfig) -> int:
    chart = load_chart(config)
    if chart is None:
        raise CurvedHZError("the geometry report needs a boundary chart")
    report = geometric_report(chart, load_mesh(config, chart), config.geometric_orders, config.levels - 1)
    path = os.path.join(config.output_dir, f"geometry_{config.chart}.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["m", "level", "h", "sup_F_minus_I", "sup_Psi_minus_I"])
        for r in report.rows:
            w.writerow([r.m, r.level, f"{r.h:.6e}", f"{r.sup_F_minus_I:.10e}", f"{r.sup_Psi_minus_I:.10e}"])
        for m in config.geometric_orders:
            w.writerow([m, "slope", "", f"{report.slopes_F[m]:.4f}", f"{report.slopes_Psi[m]:.4f}"])
    logger.info(f"Wrote {path}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "study": cmd_study,
    "infsup": cmd_infsup,
    "mesh-report": cmd_mesh_report,
    "geometry": cmd_geometry,
}


def run(config: RunConfig) -> int:
    os.makedirs(config.output_dir, exist_ok=True)
    logger.info(f"Running {config.command}: chart={config.chart} msh={config.msh} k={config.k} m={config.m} "
                f"enriched={config.enriched} levels={config.levels}")
    try:
        return COMMANDS[config.command](config)
    except CurvedHZError as e:
        logger.error(f"{type(e).__name__}: {e}")
        distance = getattr(e, "distance", None)
        if distance is not None:
            logger.error(f"Boundary vertex {distance:.3e} away from chart '{config.chart}'")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except CurvedHZError as e:
        print(f"curvedhz: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for rate failures
        return EXIT_OK if e.code in (0, None) else EXIT_ERROR
    setup_logging(config.log_dir, config.verbose)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
