"""Manufactured solutions, benchmark problems and the experiment drivers.

Three problems on the unit square are provided:

* a smooth manufactured solution ``u = cos(pi x) cos(pi y)`` (error and
  iteration-count studies),
* the characteristic function of a disk with a known piecewise-constant
  ROF solution (non-smooth convergence study, damping),
* a noisy characteristic function of an l_p ball (denoising benchmark).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    NEWTON,
    PICARD,
    State,
    error_norms,
    load_vector,
    mass_apply,
    quadrature_points,
    weak_load_vector,
)
from .local_ops import beta_norm
from .mesh import build_uniform_mesh, mesh_for_level
from .nonlinear import (
    SolveConfig,
    initial_state,
    interpolant_state,
    nonlinear_solve,
    picard_warmstart,
)
from .precond import EXACT, INEXACT

log = logging.getLogger(__name__)

CENTER = (0.5, 0.5)
DISK_ALPHA = 0.02
DISK_BETA = 1e-5
DISK_RADIUS = 1.0 / 3.0
DENOISE_ALPHA = 5e-2
DENOISE_BETA = 1e-3
DENOISE_DELTA = 0.1
ALPHA_GRID = (1e5, 1e3, 1.0, 1e-3, 1e-5)
BETA_GRID = (1.0, 1e-3, 1e-5)
CUT_REFINE = 4
BOUNDARY_RTOL = 8 * np.finfo(float).eps


def _as_mesh(level):
    """Mesh for a level index 1..4 or, for larger integers, ``n`` itself."""
    if isinstance(level, (int, np.integer)) and 1 <= level <= 4:
        return mesh_for_level(int(level))
    return build_uniform_mesh(int(level))


# ---------------------------------------------------------------- Example 1


def example1_exact(x, y, alpha, beta):
    """Smooth manufactured solution.

    Returns ``(u, p, lam)`` with ``u = cos(pi x) cos(pi y)``, ``p = grad u``
    and ``lam = alpha p / |p|_beta``; ``p`` and ``lam`` have a trailing
    axis of length 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cx, sx = np.cos(np.pi * x), np.sin(np.pi * x)
    cy, sy = np.cos(np.pi * y), np.sin(np.pi * y)
    u = cx * cy
    p = -np.pi * np.stack([sx * cy, cx * sy], axis=-1)
    lam = alpha * p / beta_norm(p, beta)[..., None]
    return u, p, lam


@dataclass(frozen=True)
class ManufacturedSolution:
    """Callables ``u``, ``p``, ``lam`` of ``(x, y)`` for fixed parameters."""

    alpha: float
    beta: float

    def u(self, x, y):
        return example1_exact(x, y, self.alpha, self.beta)[0]

    def p(self, x, y):
        return example1_exact(x, y, self.alpha, self.beta)[1]

    def lam(self, x, y):
        return example1_exact(x, y, self.alpha, self.beta)[2]

    def load(self, mesh):
        """Discrete load for ``f = u - div(lam)`` (natural boundary condition holds)."""
        return weak_load_vector(mesh, self.u, self.lam)


# ---------------------------------------------------------------- Example 2


def example2_exact(x, y, alpha=DISK_ALPHA, r=DISK_RADIUS, center=CENTER):
    """Piecewise-constant ROF solution for the disk indicator.

    ``1 - 2 alpha / r`` on the closed disk (distance <= r) and
    ``2 pi r alpha / (1 - pi r^2)`` outside.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.hypot(x - center[0], y - center[1]) <= r
    return np.where(inside, 1.0 - 2.0 * alpha / r, 2.0 * np.pi * r * alpha / (1.0 - np.pi * r * r))


def characteristic_lp_ball(x, y, p_index=2, r=DISK_RADIUS, center=CENTER):
    """1 where the l_p distance to ``center`` is strictly below ``r``, else 0.

    Distances within a few ulps of ``r`` count as on the boundary, so points
    such as ``center + (r, 0)`` are excluded despite rounding in ``x - cx``.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    dx = np.abs(np.asarray(x, dtype=float) - center[0])
    dy = np.abs(np.asarray(y, dtype=float) - center[1])
    if p_index in (1, "1"):
        d = dx + dy
    elif p_index in (2, "2"):
        d = np.hypot(dx, dy)
    elif p_index in (np.inf, "inf"):
        d = np.maximum(dx, dy)
    else:
        raise ValueError(f"p_index must be 1, 2 or inf, got {p_index!r}")
    return (d < r * (1.0 - BOUNDARY_RTOL)).astype(float)


def cut_cells(mesh, indicator, probe_refine=2):
    """Triangles on which ``indicator`` (a callable of x, y) is not constant.

    Detected by sampling at the vertices and at refined quadrature points.
    """
    verts = mesh.nodes[mesh.triangles]
    vals = indicator(verts[..., 0], verts[..., 1])
    tri, pts, _, _ = quadrature_points(mesh, probe_refine)
    q = indicator(pts[:, 0], pts[:, 1]).reshape(mesh.num_triangles, -1)
    allv = np.concatenate([vals, q], axis=1)
    return np.flatnonzero(allv.min(axis=1) != allv.max(axis=1))


def discontinuous_load(mesh, f, cells, refine=CUT_REFINE):
    """<f, phi_j> with a ``4**refine``-times subdivided rule on ``cells``."""
    mask = np.zeros(mesh.num_triangles, dtype=bool)
    mask[cells] = True
    smooth = np.flatnonzero(~mask)
    return load_vector(mesh, f, 0, smooth) + load_vector(mesh, f, refine, np.flatnonzero(mask))


def piecewise_l2_error(mesh, u_nodal, u_exact, cells, refine=CUT_REFINE):
    """||u_exact - u_h||_0 with the refined rule on ``cells``."""
    nt = mesh.num_triangles
    state = State(np.zeros((nt, 2)), np.asarray(u_nodal, float), np.zeros((nt, 2)))
    mask = np.zeros(nt, dtype=bool)
    mask[cells] = True
    e_in = error_norms(mesh, state, u_exact=u_exact, refine=refine, cells=np.flatnonzero(mask))
    e_out = error_norms(mesh, state, u_exact=u_exact, cells=np.flatnonzero(~mask))
    return float(np.hypot(e_in["u_l2"], e_out["u_l2"]))


# ---------------------------------------------------------------- Example 3


@dataclass(frozen=True)
class BenchmarkProblem:
    """Indicator of an l_p ball plus scaled nodal noise."""

    alpha: float = DENOISE_ALPHA
    beta: float = DENOISE_BETA
    p_index: object = 2
    radius: float = DISK_RADIUS
    center: tuple = CENTER
    delta: float = DENOISE_DELTA
    seed: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.delta >= 0:
            raise ValueError("noise amplitude must be non-negative")

    def f0(self, x, y):
        return characteristic_lp_ball(x, y, self.p_index, self.radius, self.center)

    def nodal_data(self, mesh):
        """Nodal values of ``f = f0 + delta xi_h``."""
        f = self.f0(mesh.nodes[:, 0], mesh.nodes[:, 1])
        if self.delta:
            f = f + self.delta * sample_noise(mesh, self.seed)
        return f

    def load(self, mesh):
        """<f0, phi_j> (refined on cut cells) + delta <xi_h, phi_j>."""
        b = discontinuous_load(mesh, self.f0, cut_cells(mesh, self.f0))
        if self.delta:
            b = b + self.delta * mass_apply(mesh, sample_noise(mesh, self.seed))
        return b


def sample_noise(mesh, seed):
    """Standard normal nodal coefficients from numpy's PCG64 generator seeded with ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal(mesh.num_nodes)


def nodal_image(mesh, u):
    """P1 nodal values as an ``(n+1, n+1)`` grid, first row at ``y = 1``."""
    n = mesh.n
    return np.asarray(u, dtype=float).reshape(n + 1, n + 1)[::-1].copy()


# ---------------------------------------------------------------- drivers


def compute_orders(errors):
    """``log2(e_{k-1} / e_k)``; the first entry is None."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out


def _solution_stats(report):
    return {
        "outer": report.outer_iterations,
        "minres_avg": report.average_minres,
        "converged": report.converged,
    }


def run_convergence(levels=(1, 2, 3, 4), alpha=1.0, beta=1.0, config=None):
    """Errors and observed orders for the smooth manufactured solution.

    Returns ``(rows, reports)``; each row has ``h``, the four errors
    (``err_p``, ``err_lam``, ``err_u_h1``, ``err_u_l2``), matching
    ``order_*`` entries and the solver statistics.
    """
    levels = list(levels)
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    cfg = (config or SolveConfig()).with_(alpha=alpha, beta=beta)
    sol = ManufacturedSolution(alpha, beta)
    rows, reports = [], []
    for lev in levels:
        mesh = _as_mesh(lev)
        state, rep = nonlinear_solve(mesh, sol.load(mesh), cfg)
        if not rep.converged:
            log.warning("level %s did not converge", lev)
        e = error_norms(mesh, state, sol.u, sol.p, sol.lam)
        rows.append({
            "h": mesh.h,
            "err_p": e["p"],
            "err_lam": e["lam"],
            "err_u_h1": e["u_h1"],
            "err_u_l2": e["u_l2"],
            **_solution_stats(rep),
        })
        reports.append(rep)
    for key in ("p", "lam", "u_h1", "u_l2"):
        for row, o in zip(rows, compute_orders([r[f"err_{key}"] for r in rows])):
            row[f"order_{key}"] = o
    return rows, reports


def run_iteration_counts(levels=(1, 2, 3, 4), config=None):
    """Outer and average MINRES counts of the smooth problem on several meshes."""
    cfg = config or SolveConfig()
    sol = ManufacturedSolution(cfg.alpha, cfg.beta)
    rows = []
    for lev in levels:
        mesh = _as_mesh(lev)
        _, rep = nonlinear_solve(mesh, sol.load(mesh), cfg)
        rows.append({"level": lev, "n": mesh.n, **_solution_stats(rep), "report": rep})
    return rows


def run_robustness(alpha_grid=ALPHA_GRID, beta_grid=BETA_GRID, level=3, method=NEWTON,
                   precond_mode=EXACT, config=None):
    """Iteration counts of the smooth problem over a grid of (alpha, beta).

    Cells run sequentially in grid order; a cell that fails to converge is
    recorded with ``converged=False`` and the sweep continues.
    """
    if not len(alpha_grid) or not len(beta_grid):
        raise ValueError("parameter grids must be non-empty")
    base = (config or SolveConfig()).with_(method=method, precond_mode=precond_mode)
    mesh = _as_mesh(level)
    cells = []
    for beta in beta_grid:
        for alpha in alpha_grid:
            cfg = base.with_(alpha=alpha, beta=beta)
            sol = ManufacturedSolution(alpha, beta)
            try:
                _, rep = nonlinear_solve(mesh, sol.load(mesh), cfg)
                stats = _solution_stats(rep)
            except (ArithmeticError, np.linalg.LinAlgError) as exc:
                log.warning("cell alpha=%g beta=%g failed: %s", alpha, beta, exc)
                rep = None
                stats = {"outer": base.nl_maxit, "minres_avg": np.nan, "converged": False}
            cells.append({"alpha": alpha, "beta": beta, **stats,
                          "summary": rep.summary() if rep else "fail", "report": rep})
    return cells


def run_disk(levels=(1, 2, 3, 4), alpha=DISK_ALPHA, beta=DISK_BETA, config=None):
    """Non-smooth convergence study: disk indicator data, interpolant start.

    Rows carry ``err_u_l2`` (solution error), ``err_interp`` (error of the
    nodal interpolant of the exact solution), their orders, solver
    statistics and the damping parameters.
    """
    cfg = (config or SolveConfig()).with_(alpha=alpha, beta=beta)
    f = lambda x, y: characteristic_lp_ball(x, y, 2, DISK_RADIUS, CENTER)  # noqa: E731
    u_exact = lambda x, y: example2_exact(x, y, alpha)  # noqa: E731
    rows, reports = [], []
    for lev in levels:
        mesh = _as_mesh(lev)
        cut = cut_cells(mesh, f)
        load = discontinuous_load(mesh, f, cut)
        f_nodal = f(mesh.nodes[:, 0], mesh.nodes[:, 1])
        init = interpolant_state(mesh, f_nodal, alpha, beta)
        state, rep = nonlinear_solve(mesh, load, cfg, init)
        ucut = cut_cells(mesh, u_exact)
        rows.append({
            "h": mesh.h,
            "err_u_l2": piecewise_l2_error(mesh, state.u, u_exact, ucut),
            "err_interp": piecewise_l2_error(
                mesh, u_exact(mesh.nodes[:, 0], mesh.nodes[:, 1]), u_exact, ucut),
            **_solution_stats(rep),
            "min_theta": min(rep.thetas) if rep.thetas else 1.0,
        })
        reports.append(rep)
    for key in ("u_l2", "interp"):
        for row, o in zip(rows, compute_orders([r[f"err_{key}"] for r in rows])):
            row[f"order_{key}"] = o
    return rows, reports


@dataclass
class DenoiseResult:
    state: object
    report: object
    image: np.ndarray
    noisy_image: np.ndarray
    warmstart: object = None
    mesh: object = field(default=None, repr=False)


def run_denoise(problem=None, method=NEWTON, level=4, config=None, warmstart_steps=5):
    """Denoise the l_p-ball benchmark.

    Picard starts from the interpolant state; Newton starts after
    ``warmstart_steps`` Picard steps from it. The AMG-based preconditioner is
    the default. Returns ``(state, report, image)``; with
    :func:`run_denoise_full` the warm-start report and input image are kept.
    """
    res = run_denoise_full(problem, method, level, config, warmstart_steps)
    return res.state, res.report, res.image


def run_denoise_full(problem=None, method=NEWTON, level=4, config=None, warmstart_steps=5):
    problem = problem or BenchmarkProblem()
    cfg = (config or SolveConfig(precond_mode=INEXACT)).with_(
        alpha=problem.alpha, beta=problem.beta, method=method)
    mesh = _as_mesh(level)
    f_nodal = problem.nodal_data(mesh)
    load = problem.load(mesh)
    warm = None
    if method == PICARD:
        init = initial_state(mesh, "interpolant", cfg, f_nodal)
    else:
        init, warm = picard_warmstart(mesh, load, cfg, f_nodal, warmstart_steps)
    state, rep = nonlinear_solve(mesh, load, cfg, init)
    return DenoiseResult(state, rep, nodal_image(mesh, state.u), nodal_image(mesh, f_nodal),
                         warm, mesh)
