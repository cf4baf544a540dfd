"""
Saddle-point solves and discrete stability constants.

solve_saddle factorizes [A B^T; B 0] with SuperLU and refines iteratively.
infsup_constant computes, densely,
    beta_h^2  = min eig of B X^{-1} B^T  relative to M
    alpha_h   = min eig of A restricted to ker B, relative to X
for a stress Gram X and displacement Gram M. Desk-scale meshes only.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu

from .assembly import SaddleSystem
from .errors import SolverError, StabilityError

logger = logging.getLogger(__name__)

RESIDUAL_TARGET = 1e-10
RESIDUAL_FAILURE = 1e-6
MAX_REFINEMENTS = 5
MAX_DENSE_SIZE = 20_000
MAX_KERNEL_SIZE = 8_000


@dataclass
class SolveResult:
    sigma_coeffs: np.ndarray
    u_coeffs: np.ndarray
    relative_residual: float
    factorization_stats: Dict[str, int] = field(default_factory=dict)


@dataclass
class StabilityReport:
    beta_h: float
    alpha_h: float
    norm_kind: str
    level: int = 0
    h: float = float("nan")
    m: int = 0
    k: int = 0

    def csv_row(self) -> list:
        return [self.level, f"{self.h:.6e}", self.m, self.k, self.norm_kind, f"{self.beta_h:.10e}", f"{self.alpha_h:.10e}"]


STABILITY_COLUMNS = ["level", "h", "m", "k", "norm_kind", "beta_h", "alpha_h"]


def saddle_inertia(system: SaddleSystem, tol: float = 1e-10) -> Tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of the dense saddle matrix."""
    n = system.n_sigma + system.n_u
    if n > MAX_DENSE_SIZE:
        raise SolverError(f"inertia needs a dense eigensolve; system size {n} above {MAX_DENSE_SIZE}")
    eig = np.linalg.eigvalsh(system.matrix().toarray())
    cut = tol * np.max(np.abs(eig))
    return int(np.sum(eig > cut)), int(np.sum(eig < -cut)), int(np.sum(np.abs(eig) <= cut))


def solve_saddle(system: SaddleSystem, tol: float = RESIDUAL_TARGET) -> SolveResult:
    """Sparse LU of the KKT matrix with iterative refinement."""
    K = system.matrix()
    b = system.rhs()
    ns = system.n_sigma
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return SolveResult(np.zeros(ns), np.zeros(system.n_u), 0.0, {"n": K.shape[0], "nnz": K.nnz})

    try:
        lu = splu(K)
    except RuntimeError as e:
        inertia = saddle_inertia(system) if K.shape[0] <= 4000 else None
        raise SolverError(f"factorization failed: {e}", inertia=inertia) from e

    x = lu.solve(b)
    rel = float(np.linalg.norm(b - K @ x)) / bnorm
    steps = 0
    while rel > tol and steps < MAX_REFINEMENTS:
        x_new = x + lu.solve(b - K @ x)
        rel_new = float(np.linalg.norm(b - K @ x_new)) / bnorm
        steps += 1
        if rel_new >= rel:
            break
        x, rel = x_new, rel_new
    if not np.all(np.isfinite(x)) or rel > RESIDUAL_FAILURE:
        raise SolverError(f"residual stagnated at {rel:.3e} after {steps} refinement steps", residual=rel)
    if rel > tol:
        logger.warning(f"Relative residual {rel:.3e} above target {tol:.0e} after {steps} refinement steps")

    stats = {"n": K.shape[0], "nnz": K.nnz, "nnz_lu": lu.L.nnz + lu.U.nnz, "refinements": steps}
    logger.info(f"Solved saddle system n={K.shape[0]}: relative residual {rel:.2e} ({steps} refinement steps)")
    return SolveResult(x[:ns], x[ns:], rel, stats)


def _dense(M) -> np.ndarray:
    return M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)


def infsup_constant(X, M, B, A=None, norm_kind: str = "Hdiv-L2", **meta) -> StabilityReport:
    """Inf-sup constant of B w.r.t. Grams X (stress) and M (displacement).

    With A given, also the coercivity constant of A on the kernel of B.
    """
    Xd, Md, Bd = _dense(X), _dense(M), _dense(B)
    ns, nu = Xd.shape[0], Md.shape[0]
    if Bd.shape != (nu, ns):
        raise StabilityError(f"B has shape {Bd.shape}, expected {(nu, ns)}")
    if max(ns, nu) > MAX_DENSE_SIZE:
        raise StabilityError(f"dense eigen path limited to {MAX_DENSE_SIZE} unknowns, got {max(ns, nu)}")
    try:
        L = scipy.linalg.cholesky(Xd, lower=True)
    except np.linalg.LinAlgError as e:
        raise StabilityError(f"stress Gram not positive definite: {e}") from e
    Y = scipy.linalg.solve_triangular(L, Bd.T, lower=True)
    S = Y.T @ Y
    try:
        lam = scipy.linalg.eigh(S, Md, eigvals_only=True, subset_by_index=[0, 0])[0]
    except np.linalg.LinAlgError as e:
        raise StabilityError(f"displacement Gram not positive definite: {e}") from e
    beta = float(np.sqrt(max(lam, 0.0)))

    alpha = float("nan")
    if A is not None:
        if ns > MAX_KERNEL_SIZE:
            logger.warning(f"Skipping kernel coercivity: {ns} stress unknowns above {MAX_KERNEL_SIZE}")
        else:
            Z = scipy.linalg.null_space(Bd)
            if Z.shape[1] > 0:
                Ad = _dense(A)
                alpha = float(scipy.linalg.eigh(Z.T @ Ad @ Z, Z.T @ Xd @ Z, eigvals_only=True,
                                                subset_by_index=[0, 0])[0])
    logger.info(f"Stability ({norm_kind}): beta_h={beta:.6f}, alpha_h={alpha:.6f}")
    return StabilityReport(beta, alpha, norm_kind, **meta)
