"""
Run configuration.

Layers, later wins:
    built-in defaults < environment (.env) < config file (key = value) < flags

Environment variables: HZ_WORKERS, HZ_LOG_DIR, HZ_OUTPUT_DIR.
"""

import argparse
import os
from dataclasses import dataclass, fields
from typing import Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

COMMANDS = ["solve", "study", "infsup", "mesh-report", "geometry"]
NORM_KINDS = ["Hdiv-L2", "mesh-dependent"]


@dataclass
class RunConfig:
    command: str = "study"
    chart: Optional[str] = "circle"
    msh: Optional[str] = None
    k: int = 3
    m: int = 2
    enriched: bool = False
    levels: int = 4
    initial_h: float = 1.0 / 3.0
    output_dir: str = "results"
    log_dir: str = "logs"
    quad_degree: Optional[int] = None
    solver_tol: float = 1e-10
    workers: int = 4
    assert_rates: bool = False
    rate_tolerance: Optional[float] = None
    svg: bool = False
    resume: bool = False
    lam: float = 1.0
    mu: float = 1.0
    solution: str = "paper_solution"
    norm_kind: str = "Hdiv-L2"
    m_list: str = "1,2,3"
    verbose: bool = False

    @property
    def geometric_orders(self) -> List[int]:
        return [int(v) for v in str(self.m_list).split(",") if v.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_ENV_KEYS = {"HZ_WORKERS": "workers", "HZ_LOG_DIR": "log_dir", "HZ_OUTPUT_DIR": "output_dir"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw) -> object:
    kind = str(_FIELD_TYPES[key])
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if "Optional" in kind:
            return None
        raise ConfigError(f"'{key}' needs a value")
    if not isinstance(raw, str):
        return raw
    value = raw.strip()
    try:
        if "bool" in kind:
            if value.lower() in _TRUE:
                return True
            if value.lower() in _FALSE:
                return False
            raise ValueError(value)
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"invalid value for '{key}': {raw!r}")
    return value


def read_config_file(path: str) -> Dict[str, object]:
    """Plain-text key = value lines; '#' starts a comment."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}' in {path}")
        values[name] = _coerce(name, raw)
    return values


def environment_values() -> Dict[str, object]:
    load_dotenv()
    values = {}
    for var, name in _ENV_KEYS.items():
        if os.getenv(var):
            values[name] = _coerce(name, os.getenv(var))
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvedhz",
                                     description="Curved Hu-Zhang mixed elasticity: solves, studies and stability reports")
    parser.add_argument("command", choices=COMMANDS)
    # None means "not given" so file and environment values survive
    parser.add_argument("--config", help="plain-text key = value config file")
    parser.add_argument("--chart", help="builtin boundary chart (circle, three_leaf)")
    parser.add_argument("--msh", help="Gmsh mesh file (versions 2.2 and 4.1)")
    parser.add_argument("--k", type=int, help="stress polynomial degree (>= 3)")
    parser.add_argument("--m", type=int, help="geometric order of the element maps")
    parser.add_argument("--enriched", action=argparse.BooleanOptionalAction,
                        help="raise the degree on boundary elements")
    parser.add_argument("--levels", type=int, help="number of mesh levels")
    parser.add_argument("--initial-h", dest="initial_h", type=float, help="target mesh size of the coarsest disk mesh")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--log-dir", dest="log_dir")
    parser.add_argument("--quad-degree", dest="quad_degree", type=int, help="override the assembly quadrature degree")
    parser.add_argument("--solver-tol", dest="solver_tol", type=float)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--assert-rates", dest="assert_rates", action=argparse.BooleanOptionalAction,
                        help="exit 2 when fitted rates miss the reference values")
    parser.add_argument("--rate-tolerance", dest="rate_tolerance", type=float)
    parser.add_argument("--svg", action=argparse.BooleanOptionalAction, help="write a log-log convergence plot")
    parser.add_argument("--resume", action=argparse.BooleanOptionalAction, help="resume from the study checkpoint")
    parser.add_argument("--lam", type=float)
    parser.add_argument("--mu", type=float)
    parser.add_argument("--solution", help="manufactured solution (paper_solution, linear_patch)")
    parser.add_argument("--norm-kind", dest="norm_kind", choices=NORM_KINDS)
    parser.add_argument("--m-list", dest="m_list", help="comma-separated geometric orders for 'geometry'")
    parser.add_argument("-v", "--verbose", action="store_const", const=True)
    return parser


def validate(config: RunConfig) -> RunConfig:
    if config.command not in COMMANDS:
        raise ConfigError(f"unknown command '{config.command}'")
    if config.k < 3:
        raise ConfigError(f"k must be ≥ 3 (the Hu-Zhang stress element needs k >= 3), got k={config.k}")
    if config.m < 1:
        raise ConfigError(f"m must be ≥ 1, got m={config.m}")
    if config.command == "study" and config.levels < 3:
        raise ConfigError(f"a study needs levels ≥ 3 to fit rates, got {config.levels}")
    if config.levels < 1:
        raise ConfigError(f"levels must be ≥ 1, got {config.levels}")
    if config.initial_h <= 0:
        raise ConfigError(f"initial_h must be positive, got {config.initial_h}")
    if config.workers < 1:
        raise ConfigError(f"workers must be ≥ 1, got {config.workers}")
    if config.solver_tol <= 0:
        raise ConfigError(f"solver_tol must be positive, got {config.solver_tol}")
    if config.lam <= 0 or config.mu <= 0:
        raise ConfigError(f"Lame parameters must be positive, got lam={config.lam}, mu={config.mu}")
    if config.norm_kind not in NORM_KINDS:
        raise ConfigError(f"unknown norm kind '{config.norm_kind}'")
    if config.chart is None and config.msh is None and config.command != "solve":
        raise ConfigError("give --chart or --msh")
    try:
        config.geometric_orders
    except ValueError:
        raise ConfigError(f"m_list must be comma-separated integers, got {config.m_list!r}")
    return config


def parse_config(argv: Optional[List[str]] = None, config_file: Optional[str] = None) -> RunConfig:
    """Merge defaults, environment, config file and flags into a validated RunConfig."""
    args = build_parser().parse_args(argv)
    values: Dict[str, object] = environment_values()
    path = args.config or config_file
    if path:
        values.update(read_config_file(path))
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        values[key] = value
    values.pop("command", None)
    return validate(RunConfig(command=args.command, **values))
