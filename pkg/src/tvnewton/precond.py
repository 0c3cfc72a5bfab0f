"""Block-diagonal Riesz-map preconditioners for the linearized saddle-point system.

The preconditioner is the inverse of ``diag(alpha H, S_r, alpha^{-1} H^{-1})``
in the discrete pairing, where ``S_r = M + alpha K_H`` is the P1 mass plus
H-weighted stiffness matrix. The two P0 blocks are element-local 2x2 blocks
and are inverted in closed form; only the middle block needs a solver.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .amg import AmgConfig, amg_setup, inexact_middle_solve
from .assembly import (
    NEWTON,
    BlockField,
    assemble_p1_mass,
    assemble_weighted_stiffness,
    build_block_field,
    p0_block_matrix,
)
from .krylov import SolveReport

EXACT = "exact"
INEXACT = "inexact"

EXACT_PCG_TOL = 1e-12
INEXACT_PCG_TOL = 1e-3


@dataclass
class MiddleStats:
    calls: int = 0
    inner_iterations: int = 0
    failures: int = 0
    last: SolveReport = None


@dataclass(eq=False)
class BlockPreconditioner:
    """Action of B_h(r) (exact mode) or its AMG-based approximation (inexact mode).

    ``first_inv`` and ``third_inv`` hold the per-triangle inverses of
    ``area * alpha * H`` and ``area * alpha^{-1} * H^{-1}``.
    """

    mesh: object
    alpha: float
    mode: str
    first_inv: np.ndarray
    third_inv: np.ndarray
    S: sp.csr_matrix
    middle_solver: str
    middle_tol: float
    hierarchy: object = None
    lu: object = None
    stats: MiddleStats = field(default_factory=MiddleStats)

    def solve_middle(self, r):
        if self.lu is not None:
            self.stats.calls += 1
            return self.lu.solve(r)
        x, rep = inexact_middle_solve(self.hierarchy, r, tol=self.middle_tol)
        self.stats.calls += 1
        self.stats.inner_iterations += rep.iterations
        self.stats.failures += not rep.converged
        self.stats.last = rep
        return x

    def __call__(self, y):
        return apply_preconditioner(self, y)

    def forward_matrix(self):
        """Sparse matrix of B^{-1} = diag(alpha H, S_r, alpha^{-1} H^{-1}) in the discrete pairing."""
        area = self.mesh.areas[:, None, None]
        first = np.linalg.inv(self.first_inv) / area
        third = np.linalg.inv(self.third_inv) / area
        return sp.block_diag(
            [p0_block_matrix(self.mesh, first), self.S, p0_block_matrix(self.mesh, third)],
            format="csr",
        )

    def apply_forward(self, x):
        return self.forward_matrix() @ x


def build_preconditioner(mesh, field, alpha, beta=None, mode=EXACT, method=NEWTON,
                         exact_solver="pcg", amg_config=None, middle_tol=None):
    """Assemble the block preconditioner.

    Parameters
    ----------
    field : BlockField or (nt, 2) array
        The weight H (or 1/|r|_b); an array is taken as the p-field ``r`` and
        evaluated with ``beta`` and ``method``.
    mode : {"exact", "inexact"}
        Exact mode solves the middle block to machine accuracy; inexact mode
        runs AMG-preconditioned CG to a relative l2 residual of 1e-3.
    exact_solver : {"pcg", "direct"}
        Exact-mode middle solver: AMG-preconditioned CG to a relative
        residual of 1e-12 (default), or a sparse LU factorization.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if mode not in (EXACT, INEXACT):
        raise ValueError(f"unknown preconditioner mode {mode!r}")
    if not isinstance(field, BlockField):
        if beta is None:
            raise ValueError("beta is required when passing a p-field")
        field = build_block_field(mesh, field, beta, method)
    area = mesh.areas[:, None, None]
    first_inv = field.Hinv / (alpha * area)
    third_inv = alpha * field.H / area
    S = (assemble_p1_mass(mesh) + assemble_weighted_stiffness(mesh, field, alpha)).tocsr()

    hierarchy = lu = None
    if mode == EXACT and exact_solver == "direct":
        lu = spla.splu(S.tocsc())
        solver, tol = "direct", 0.0
    elif mode == EXACT and exact_solver == "pcg":
        hierarchy = amg_setup(S, config=amg_config)
        solver, tol = "pcg", middle_tol or EXACT_PCG_TOL
    elif mode == EXACT:
        raise ValueError(f"unknown exact solver {exact_solver!r}")
    else:
        hierarchy = amg_setup(S, config=amg_config or AmgConfig())
        solver, tol = "pcg", middle_tol or INEXACT_PCG_TOL
    return BlockPreconditioner(mesh, alpha, mode, first_inv, third_inv, S, solver, tol,
                               hierarchy, lu)


def apply_preconditioner(B, y):
    """Map a dual vector ``[R_p, R_u, R_lam]`` to a primal vector ``[p, u, lam]``."""
    mesh = B.mesh
    nt, nn = mesh.num_triangles, mesh.num_nodes
    y = np.asarray(y, dtype=float)
    if y.shape != (4 * nt + nn,):
        raise ValueError("dual vector has wrong length")
    yp = y[: 2 * nt].reshape(nt, 2)
    yu = y[2 * nt : 2 * nt + nn]
    yl = y[2 * nt + nn :].reshape(nt, 2)
    xp = np.einsum("tcd,td->tc", B.first_inv, yp)
    xl = np.einsum("tcd,td->tc", B.third_inv, yl)
    xu = B.solve_middle(yu)
    return np.concatenate([xp.ravel(), xu, xl.ravel()])
