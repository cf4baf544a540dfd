"""
curvedhz - curved Hu-Zhang mixed finite elements for planar elasticity.

Strongly symmetric, H(div)-conforming stress on triangulations whose
boundary elements follow a curved boundary to geometric order m, with a
manufactured-solution harness for convergence and stability studies.
"""

from .assembly import MaterialLaw, assemble_system
from .curving import build_curved_mesh, build_exact_map
from .errors import CurvedHZError
from .geometry import make_builtin_chart, project_to_boundary
from .mesh import generate_disk_mesh, read_gmsh, uniform_refine, unit_square_mesh
from .solver import infsup_constant, solve_saddle
from .spaces import build_displacement_space, build_stress_space
from .verify import make_manufactured, run_study

__version__ = "0.3.0"
