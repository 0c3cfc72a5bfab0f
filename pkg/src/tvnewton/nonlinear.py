"""Damped Newton and Picard iterations for the discrete primal-dual system."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (
    NEWTON,
    PICARD,
    State,
    assemble_operator,
    build_block_field,
    newton_rhs,
)
from .krylov import minres
from .local_ops import beta_norm
from .mesh import element_gradients
from .precond import EXACT, INEXACT, build_preconditioner

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveConfig:
    alpha: float = 1.0
    beta: float = 1.0
    method: str = NEWTON
    precond_mode: str = EXACT
    nl_tol: float = 1e-6
    nl_maxit: int = 200
    minres_tol: float = 1e-10
    minres_maxit: int = 200
    sigma: float = 1e-4
    damping: bool = True
    max_backtracks: int = 30
    seed: int = 0
    exact_solver: str = "pcg"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.method not in (NEWTON, PICARD):
            raise ValueError(f"method must be 'newton' or 'picard', got {self.method!r}")
        if self.precond_mode not in (EXACT, INEXACT):
            raise ValueError(f"precond_mode must be 'exact' or 'inexact', got {self.precond_mode!r}")
        for name in ("nl_tol", "minres_tol", "sigma"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("nl_maxit", "minres_maxit", "max_backtracks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class NonlinearReport:
    """Iteration history of one nonlinear solve.

    ``residuals[k]`` is the l2 norm of the residual vector before update
    ``k``; it has one more entry than ``minres_iterations`` and ``thetas``.
    """

    method: str
    outer_iterations: int = 0
    residuals: list = field(default_factory=list)
    minres_iterations: list = field(default_factory=list)
    minres_histories: list = field(default_factory=list)
    minres_converged: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    line_search_failures: int = 0
    converged: bool = False

    @property
    def average_minres(self):
        return float(np.mean(self.minres_iterations)) if self.minres_iterations else 0.0

    @property
    def relative_residuals(self):
        r0 = self.residuals[0] if self.residuals else 0.0
        return [r / r0 for r in self.residuals] if r0 else []

    def summary(self):
        return f"{self.outer_iterations}({round(self.average_minres)})"


def residual_vector(mesh, state, load, config):
    return newton_rhs(mesh, state, load, config.alpha, config.beta)


def line_search(residual_norm_fn, current, direction, sigma=1e-4, max_backtracks=30,
                current_norm=None):
    """Backtracking on theta = 1, 1/2, 1/4, ...

    Accepts the first theta with ``||b(x + theta d)|| <= (1 - sigma theta) ||b(x)||``.
    Returns ``(theta, state, trial_norm, ok)``; on exhaustion the smallest
    trial step is returned with ``ok = False``.
    """
    b0 = residual_norm_fn(current) if current_norm is None else current_norm
    theta = 1.0
    for k in range(max_backtracks + 1):
        trial = current.axpy(theta, direction)
        nb = residual_norm_fn(trial)
        if nb <= (1.0 - sigma * theta) * b0:
            return theta, trial, nb, True
        if k < max_backtracks:
            theta *= 0.5
    return theta, trial, nb, False


def nonlinear_solve(mesh, load, config, init=None, report_minres_history=False):
    """Newton (with optional damping) or Picard iteration from ``init``.

    Each step linearizes at the current iterate, solves the saddle-point
    correction system by preconditioned MINRES (zero initial guess) and
    updates. Stops when ``||b^n|| <= nl_tol ||b^0||`` (or ``b^0 = 0``).
    """
    state = State.zeros(mesh) if init is None else init.copy()
    state.check(mesh)
    rep = NonlinearReport(config.method)

    def rnorm(s):
        return float(np.linalg.norm(residual_vector(mesh, s, load, config)))

    b = residual_vector(mesh, state, load, config)
    bn = float(np.linalg.norm(b))
    rep.residuals.append(bn)
    b0 = bn
    if b0 == 0.0:
        rep.converged = True
        return state, rep

    for it in range(config.nl_maxit):
        if bn <= config.nl_tol * b0:
            rep.converged = True
            break
        fieldH = build_block_field(mesh, state.p, config.beta, config.method)
        A = assemble_operator(mesh, fieldH, config.alpha)
        B = build_preconditioner(mesh, fieldH, config.alpha, mode=config.precond_mode,
                                 exact_solver=config.exact_solver)
        dx, lrep = minres(A, B, b, tol=config.minres_tol, maxit=config.minres_maxit)
        rep.minres_iterations.append(lrep.iterations)
        rep.minres_converged.append(lrep.converged)
        if report_minres_history:
            rep.minres_histories.append(lrep.relative_residuals)
        d = State.from_flat(mesh, dx)

        if config.method == NEWTON and config.damping:
            theta, state, bn, ok = line_search(rnorm, state, d, config.sigma,
                                               config.max_backtracks, current_norm=bn)
            if not ok:
                rep.line_search_failures += 1
                log.warning("line search exhausted at step %d, taking theta=%g", it, theta)
        else:
            theta = 1.0
            state = state.axpy(1.0, d)
            bn = rnorm(state)
        rep.thetas.append(theta)
        rep.outer_iterations += 1
        rep.residuals.append(bn)
        b = residual_vector(mesh, state, load, config)
        log.debug("step %d: |b|=%.3e theta=%g minres=%d", it, bn, theta, lrep.iterations)
        if not np.isfinite(bn):
            break
    else:
        rep.converged = bn <= config.nl_tol * b0
    return state, rep


def interpolant_state(mesh, f_nodal, alpha, beta):
    """u = I_h f, p = grad u per triangle, lam = alpha p / |p|_b."""
    u = np.asarray(f_nodal, dtype=float).copy()
    p = element_gradients(mesh, u)
    lam = alpha * p / beta_norm(p, beta)[:, None]
    return State(p, u, lam)


def initial_state(mesh, strategy="zero", config=None, f_nodal=None, load=None, picard_steps=5):
    """Initial guess: ``"zero"``, ``"interpolant"`` or ``"picard_warmstart"``.

    The warm start runs ``picard_steps`` Picard updates from the interpolant
    and needs ``load``; use :func:`picard_warmstart` to also get its report.
    """
    if strategy == "zero":
        return State.zeros(mesh)
    if config is None or f_nodal is None:
        raise ValueError(f"strategy {strategy!r} needs config and f_nodal")
    s0 = interpolant_state(mesh, f_nodal, config.alpha, config.beta)
    if strategy == "interpolant":
        return s0
    if strategy == "picard_warmstart":
        return picard_warmstart(mesh, load, config, f_nodal, picard_steps)[0]
    raise ValueError(f"unknown initial strategy {strategy!r}")


def picard_warmstart(mesh, load, config, f_nodal, steps=5):
    """Run ``steps`` Picard updates from the interpolant state; returns (state, report)."""
    if load is None:
        raise ValueError("picard_warmstart needs the load vector")
    s0 = interpolant_state(mesh, f_nodal, config.alpha, config.beta)
    cfg = config.with_(method=PICARD, nl_maxit=steps, nl_tol=1e-300)
    return nonlinear_solve(mesh, load, cfg, s0)
