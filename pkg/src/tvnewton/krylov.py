"""Preconditioned MINRES and CG, and a Lanczos condition-number estimate."""

from dataclasses import dataclass, field

import numpy as np


class KrylovBreakdown(ArithmeticError):
    """Raised when an operator assumed SPD produces a non-positive quadratic form."""


@dataclass
class SolveReport:
    iterations: int = 0
    relative_residuals: list = field(default_factory=list)
    converged: bool = False
    final_residual: float = 0.0


def as_apply(op):
    """Normalize a matrix, LinearOperator or callable to a callable."""
    if op is None:
        return lambda v: v.copy()
    if callable(op) and not hasattr(op, "shape"):
        return op
    return lambda v: op @ v


def minres(apply_A, apply_B, rhs, tol=1e-10, maxit=200, x0=None):
    """Preconditioned MINRES for a symmetric (possibly indefinite) system.

    Minimizes the residual in the norm ``sqrt(r . B r)`` over the Krylov
    space of ``B A``. Stops once that norm, relative to its initial value,
    drops to ``tol`` or after ``maxit`` iterations.

    Parameters
    ----------
    apply_A : callable or matrix
        Symmetric operator.
    apply_B : callable, matrix or None
        Symmetric positive definite preconditioner (approximate inverse of A).
    rhs : ndarray
    tol : float
    maxit : int
    x0 : ndarray, optional

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    A = as_apply(apply_A)
    B = as_apply(apply_B)
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    report = SolveReport()

    r1 = b - A(x) if x0 is not None else b.copy()
    y = B(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise KrylovBreakdown("preconditioner is not positive definite")
    if beta1 == 0:
        report.converged = True
        report.relative_residuals.append(0.0)
        return x, report
    beta1 = np.sqrt(beta1)
    report.relative_residuals.append(1.0)

    r2 = r1
    oldb, beta = 0.0, beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)

    for itn in range(1, maxit + 1):
        v = y / beta
        y = A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = B(r2)
        oldb = beta
        bsq = float(r2 @ y)
        if bsq < 0:
            raise KrylovBreakdown(
                f"negative B-norm of Lanczos vector at iteration {itn} (B not SPD?)"
            )
        beta = np.sqrt(bsq)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        rel = phibar / beta1
        report.relative_residuals.append(rel)
        report.iterations = itn
        if rel <= tol or beta == 0.0:
            report.converged = rel <= tol
            break

    report.final_residual = report.relative_residuals[-1]
    report.converged = report.final_residual <= tol
    return x, report


def pcg(apply_S, apply_M, rhs, tol=1e-3, maxit=200, x0=None):
    """Preconditioned conjugate gradients, stopped on the l2 relative residual.

    Raises :class:`KrylovBreakdown` on non-positive curvature ``p . S p <= 0``,
    which signals a non-SPD operator.
    """
    S = as_apply(apply_S)
    M = as_apply(apply_M)
    b = np.asarray(rhs, dtype=float)
    report = SolveReport()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        report.converged = True
        report.relative_residuals.append(0.0)
        return x, report
    r = b - S(x) if x0 is not None else b.copy()
    rel = np.linalg.norm(r) / bnorm
    report.relative_residuals.append(rel)
    if rel <= tol:
        report.converged = True
        report.final_residual = rel
        return x, report
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxit + 1):
        Sp = S(p)
        curv = float(p @ Sp)
        if curv <= 0:
            raise KrylovBreakdown(f"non-positive curvature {curv:.3e} at iteration {k}")
        a = rz / curv
        x += a * p
        r -= a * Sp
        rel = np.linalg.norm(r) / bnorm
        report.relative_residuals.append(rel)
        report.iterations = k
        if rel <= tol:
            break
        z = M(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.final_residual = report.relative_residuals[-1]
    report.converged = report.final_residual <= tol
    return x, report


@dataclass
class ConditionEstimate:
    lambda_max: float
    lambda_min: float
    kappa: float
    steps: int
    converged: bool


def estimate_condition_number(apply_A, apply_B, dimension, probes=200, rtol=1e-4, seed=0):
    """Extreme eigenvalue magnitudes of ``B A`` by Lanczos.

    ``B A`` is self-adjoint in the inner product ``<B^{-1} x, y>``; Lanczos is
    run on its square ``(B A)^2``, which is positive definite in the same
    inner product, so Ritz values never fall in the spectral gap around zero
    of the indefinite operator. Full reorthogonalization is used. The
    estimate is flagged converged once both extreme Ritz values change by
    less than ``rtol`` (relative) over five consecutive steps.

    Only the action of ``B`` is needed (``B`` must be linear).
    """
    A = as_apply(apply_A)
    B = as_apply(apply_B)
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(dimension)
    q = B(r)
    nrm = np.sqrt(float(r @ q))
    Q, R = [q / nrm], [r / nrm]  # primal Lanczos vectors and their B^{-1} images
    alphas, betas = [], []
    history = []
    converged = False
    m = min(probes, dimension)
    for j in range(m):
        g = A(B(A(Q[j])))  # B^{-1} (BA)^2 q_j
        a = float(g @ Q[j])
        alphas.append(a)
        # full reorthogonalization in the B^{-1} inner product, applied twice
        for _ in range(2):
            coef = np.array([g @ qi for qi in Q])
            g = g - np.dot(coef, np.array(R))
        w = B(g)
        bsq = float(g @ w)
        ritz = np.linalg.eigvalsh(_tridiag(alphas, betas))
        history.append((ritz[-1], ritz[0]))
        if len(history) > 5:
            old = history[-6]
            if (abs(ritz[-1] - old[0]) <= rtol * ritz[-1]
                    and abs(ritz[0] - old[1]) <= rtol * ritz[0]):
                converged = True
                break
        if bsq <= 1e-28 * max(alphas):
            converged = True  # invariant subspace: Ritz values are exact
            break
        b = np.sqrt(bsq)
        betas.append(b)
        Q.append(w / b)
        R.append(g / b)
    lmax2, lmin2 = history[-1]
    lmax, lmin = np.sqrt(lmax2), np.sqrt(max(lmin2, 0.0))
    kappa = lmax / lmin if lmin > 0 else np.inf
    return ConditionEstimate(float(lmax), float(lmin), float(kappa), len(alphas), converged)


def _tridiag(alphas, betas):
    k = len(alphas)
    T = np.diag(alphas)
    if k > 1:
        off = np.asarray(betas[: k - 1])
        T += np.diag(off, 1) + np.diag(off, -1)
    return T
